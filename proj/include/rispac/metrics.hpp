#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rispac/channel.hpp"
#include "rispac/common.hpp"
#include "rispac/config.hpp"
#include "rispac/fisher.hpp"
#include "rispac/types.hpp"

namespace rispac {

/// SINR over all subcarriers of one UE and the resulting rate in bps/Hz.
inline std::pair<double, double> sinr_rate(const ChannelSet& ch, const BeamSet& w,
                                           const PhaseProfile& phase, const SystemConfig& cfg,
                                           int k) {
  const int chi = cfg.obstruction[k];
  double signal = 0.0;
  double interference = 0.0;
  for (int idx = 0; idx < ch.n_subcarriers; ++idx) {
    const int n = idx + 1;
    const CVec g = ch.effective_channel(n, k, chi, phase.v);
    for (int j = 0; j < static_cast<int>(w[idx].size()); ++j) {
      const double p = std::norm((g.adjoint() * w[idx][j]).value());
      (j == k ? signal : interference) += p;
    }
  }
  const double gamma = signal / (interference + cfg.noise_variance());
  return {gamma, std::log2(1.0 + gamma)};
}

struct UeMetrics {
  double sinr = 0.0;
  double rate = 0.0;  // bps/Hz
  double crb = 0.0;   // m^2
  double peb = 0.0;   // m
  int efim_rank = 0;
  double efim_cond = 0.0;
};

struct MetricsReport {
  std::vector<UeMetrics> ue;
  double power_total_w = 0.0;
  double power_total_dbm = -kInf;
  // optimizer diagnostics
  std::string solver_status = "none";
  double sdr_bound_power_w = 0.0;
  double sdr_gap = 0.0;
  double stage1_objective = 0.0;
  int randomization_trials_used = 0;
};

inline MetricsReport evaluate_metrics(const ChannelSet& ch, const BeamSet& w,
                                      const PhaseProfile& phase, const SystemConfig& cfg) {
  MetricsReport rep;
  rep.ue.resize(ch.n_ues);
  for (int k = 0; k < ch.n_ues; ++k) {
    UeMetrics& m = rep.ue[k];
    std::tie(m.sinr, m.rate) = sinr_rate(ch, w, phase, cfg, k);
    const EfimParts parts = efim_closed_form(ch, w, phase, k, cfg);
    Eigen::SelfAdjointEigenSolver<Mat> eig(parts.efim);
    const double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    const double cutoff = 1e-12 * std::max(lmax, 1e-300);
    m.efim_rank = (eig.eigenvalues().array() > cutoff).count();
    const double lmin = eig.eigenvalues().minCoeff();
    m.efim_cond = (lmin > cutoff) ? lmax / lmin : kInf;
    const bool constrained = std::isfinite(cfg.peb_threshold[k]);
    if (cfg.peb_mode == PebMode::Strict && !constrained &&
        m.efim_rank < static_cast<int>(parts.efim.rows())) {
      // a UE without a positioning requirement may legitimately be
      // unobservable; report an infinite bound instead of failing
      m.crb = kInf;
      m.peb = kInf;
    } else {
      const CrbPeb cp = crb_peb(parts.efim, cfg.peb_mode);
      m.crb = cp.crb;
      m.peb = cp.peb;
    }
  }
  rep.power_total_w = total_power(w);
  rep.power_total_dbm = rep.power_total_w > 0 ? watt_to_dbm(rep.power_total_w) : -kInf;
  return rep;
}

/// CSV column order: power_total_w, power_total_dbm, then per UE
/// {sinr, rate_bpshz, crb_m2, peb_m, efim_rank, efim_cond}, then
/// sdr_bound_power_w, sdr_gap, stage1_objective, randomization_trials,
/// solver_status.
inline std::string metrics_csv_header(int n_ues) {
  std::string h = "power_total_w,power_total_dbm";
  for (int k = 1; k <= n_ues; ++k) {
    const std::string s = "_k" + std::to_string(k);
    h += ",sinr" + s + ",rate" + s + "_bpshz,crb" + s + "_m2,peb" + s + "_m,efim_rank" + s +
         ",efim_cond" + s;
  }
  h += ",sdr_bound_power_w,sdr_gap,stage1_objective,randomization_trials,solver_status";
  return h;
}

namespace detail {

inline std::string num_field(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_csv_row(const MetricsReport& r) {
  using detail::num_field;
  std::string row = num_field(r.power_total_w) + "," + num_field(r.power_total_dbm);
  for (const UeMetrics& m : r.ue) {
    row += "," + num_field(m.sinr) + "," + num_field(m.rate) + "," + num_field(m.crb) + "," +
           num_field(m.peb) + "," + std::to_string(m.efim_rank) + "," + num_field(m.efim_cond);
  }
  row += "," + num_field(r.sdr_bound_power_w) + "," + num_field(r.sdr_gap) + "," +
         num_field(r.stage1_objective) + "," + std::to_string(r.randomization_trials_used) +
         "," + r.solver_status;
  return row;
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["power_total_w"] = r.power_total_w;
  j["power_total_dbm"] = r.power_total_dbm;
  auto ues = nlohmann::ordered_json::array();
  for (const UeMetrics& m : r.ue) {
    ues.push_back({{"sinr", m.sinr},
                   {"rate_bpshz", m.rate},
                   {"crb_m2", m.crb},
                   {"peb_m", std::isfinite(m.peb) ? nlohmann::ordered_json(m.peb)
                                                  : nlohmann::ordered_json(nullptr)},
                   {"efim_rank", m.efim_rank},
                   {"efim_cond", std::isfinite(m.efim_cond)
                                     ? nlohmann::ordered_json(m.efim_cond)
                                     : nlohmann::ordered_json(nullptr)}});
  }
  j["ue"] = ues;
  j["sdr_bound_power_w"] = r.sdr_bound_power_w;
  j["sdr_gap"] = r.sdr_gap;
  j["stage1_objective"] = r.stage1_objective;
  j["randomization_trials"] = r.randomization_trials_used;
  j["solver_status"] = r.solver_status;
  return j;
}

}  // namespace rispac
