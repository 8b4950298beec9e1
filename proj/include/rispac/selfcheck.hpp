#pragma once

#include <algorithm>
#include <cmath>

#include "rispac/beamforming.hpp"
#include "rispac/channel.hpp"
#include "rispac/config.hpp"
#include "rispac/fisher.hpp"

namespace rispac {

struct FimCheckResult {
  double max_rel_error = 0.0;
  int instances = 0;
  bool pass = false;
};

namespace detail {

// Entry-wise comparison scaled like a correlation: |d_ij| over
// sqrt(J_ii J_jj), floored at a fraction of the largest entry so empty
// rows do not blow up the ratio.
inline double fim_rel_error(const Mat6& a, const Mat6& b) {
  const double big = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  if (big <= 0) return 0.0;
  double worst = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double scale =
          std::max(std::sqrt(std::abs(a(i, i)) * std::abs(a(j, j))), 1e-9 * big);
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / scale);
    }
  return worst;
}

}  // namespace detail

/// Compares the analytic channel FIM against the central-difference
/// reference on seeded random instances derived from the given config
/// (random beams, random phases, each UE in turn). The corrupt flag is a
/// test hook that perturbs the subcarrier spacing in the analytic path only.
inline FimCheckResult fim_selfcheck(const SystemConfig& base, int n_instances = 20,
                                    bool corrupt_delta_f = false) {
  FimCheckResult out;
  out.instances = n_instances;
  SystemConfig cfg = base;
  cfg.ris_partitions = 1;
  for (int inst = 0; inst < n_instances; ++inst) {
    cfg.seed = base.seed + inst;
    const ChannelSet ch = assemble_channels(cfg);
    Rng rng(cfg.seed * 77 + 5);
    BeamSet w = zero_beams(ch.n_subcarriers, ch.n_ues, ch.n_tx);
    for (auto& per_ue : w)
      for (auto& wk : per_ue)
        for (int i = 0; i < ch.n_tx; ++i) wk(i) = circular_gaussian(rng);
    const PhaseProfile phase = random_phase_profile(ch.n_ris, rng);
    const int k = inst % ch.n_ues;
    const int chi = cfg.obstruction[k];
    const double tau_d = ch.bs_to_ue[k].delay;
    const double tau_r = ch.legs[0].ris_to_ue[k].delay;

    CVec alpha_d(ch.n_subcarriers), alpha_r(ch.n_subcarriers);
    for (int n = 1; n <= ch.n_subcarriers; ++n)
      std::tie(alpha_d(n - 1), alpha_r(n - 1)) = alpha_terms(ch, w, phase, k, n, cfg.delta_f);

    const double df_analytic = corrupt_delta_f ? cfg.delta_f * (1.0 + 1e-3) : cfg.delta_f;
    const Mat6 analytic =
        fim_channel(alpha_d, alpha_r, chi, tau_d, tau_r, df_analytic, cfg.noise_variance());
    const Mat6 reference =
        fim_channel_fd(alpha_d, alpha_r, chi, tau_d, tau_r, cfg.delta_f, cfg.noise_variance());
    out.max_rel_error = std::max(out.max_rel_error, detail::fim_rel_error(reference, analytic));
  }
  out.pass = out.max_rel_error < 1e-4;
  return out;
}

}  // namespace rispac
