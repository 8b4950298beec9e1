#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rispac/channel.hpp"
#include "rispac/common.hpp"
#include "rispac/config.hpp"
#include "rispac/fisher.hpp"
#include "rispac/metrics.hpp"
#include "rispac/sdp/embed.hpp"
#include "rispac/sdp/problem.hpp"
#include "rispac/sdp/randomize.hpp"
#include "rispac/sdp/solver.hpp"
#include "rispac/types.hpp"

namespace rispac {

inline std::vector<double> rate_weights(const SystemConfig& cfg) {
  std::vector<double> beta(cfg.n_ues());
  for (int k = 0; k < cfg.n_ues(); ++k) beta[k] = std::exp2(cfg.rate_req[k]) - 1.0;
  return beta;
}

/// C = diag(h_r^H) G and A = C C^H for one sub-array, so that the reflected
/// row satisfies h_r^H diag(v) G = v^T C.
inline std::pair<CMat, CMat> composite_matrices(const ChannelSet& ch, int k, int n,
                                                int leg = 0) {
  const RisLeg& l = ch.legs[leg];
  const CVec& hr = l.ris_ue[n - 1][k];
  CMat c = hr.conjugate().asDiagonal() * l.bs_ris[n - 1];
  CMat a = c * c.adjoint();
  return {std::move(c), 0.5 * (a + a.adjoint())};
}

namespace detail {

// Weighted channel-gain kernels, one per sub-array: the objective of the
// phase search is sum_j v_j^T B_j conj(v_j). UEs with zero rate weight are
// excluded; with a partitioned surface UE k is weighted on sub-array
// k mod parts.
inline std::vector<CMat> stage1_kernels(const ChannelSet& ch, const std::vector<double>& beta) {
  const int parts = static_cast<int>(ch.legs.size());
  std::vector<CMat> kernels(parts);
  for (int j = 0; j < parts; ++j)
    kernels[j] = CMat::Zero(ch.legs[j].geom.size(), ch.legs[j].geom.size());
  for (int k = 0; k < ch.n_ues; ++k) {
    if (!(beta[k] > 0)) continue;
    const int j = k % parts;
    for (int n = 1; n <= ch.n_subcarriers; ++n) {
      const auto [c, a] = composite_matrices(ch, k, n, j);
      kernels[j] += a / beta[k];
    }
  }
  return kernels;
}

inline double leg_objective(const CMat& kernel, const CVec& v_seg) {
  return (v_seg.transpose() * kernel * v_seg.conjugate()).value().real();
}

}  // namespace detail

inline double stage1_objective_value(const ChannelSet& ch, const std::vector<double>& beta,
                                     const CVec& v) {
  const auto kernels = detail::stage1_kernels(ch, beta);
  double f = 0.0;
  for (size_t j = 0; j < kernels.size(); ++j)
    f += detail::leg_objective(kernels[j],
                               v.segment(ch.legs[j].offset, ch.legs[j].geom.size()));
  return f;
}

struct Stage1Result {
  PhaseProfile profile;
  double objective = 0.0;
  double sdr_bound = 0.0;  // continuous mode only
  // one entry per coordinate update of every restart, for ascent checks
  std::vector<std::vector<double>> objective_traces;
};

/// Multi-start cyclic coordinate ascent over the quantized phase levels:
/// each coordinate is set to the level maximizing its linear term with all
/// others fixed, sweeping until a full sweep changes nothing (at most 50
/// sweeps), from an all-zero start plus `starts` random ones.
inline Stage1Result stage1_discrete(const ChannelSet& ch, const std::vector<double>& beta,
                                    int n_levels, int starts, Rng& rng) {
  if (n_levels < 2) throw InvalidArgument("stage1_discrete: need at least 2 phase levels");
  const int m_total = ch.n_ris;
  const double mag = 1.0 / std::sqrt(static_cast<double>(m_total));
  std::vector<Cplx> level_phasor(n_levels);
  for (int l = 0; l < n_levels; ++l) level_phasor[l] = std::polar(1.0, 2.0 * kPi * l / n_levels);

  const auto kernels = detail::stage1_kernels(ch, beta);
  Stage1Result out;
  out.profile.mode = PhaseMode::Discrete;
  out.profile.n_levels = n_levels;
  out.profile.v.resize(m_total);
  out.profile.levels.assign(m_total, 0);

  for (size_t j = 0; j < kernels.size(); ++j) {
    const CMat& b = kernels[j];
    const int m = static_cast<int>(b.rows());
    std::vector<int> best_levels(m, 0);
    double best_f = -kInf;

    for (int start = 0; start <= starts; ++start) {
      std::vector<int> levels(m, 0);
      if (start > 0)
        for (int i = 0; i < m; ++i)
          levels[i] = static_cast<int>(uniform_unit(rng) * n_levels) % n_levels;

      CVec v(m);
      for (int i = 0; i < m; ++i) v(i) = mag * level_phasor[levels[i]];
      CVec t = b * v.conjugate();
      std::vector<double> trace;
      double f = detail::leg_objective(b, v);

      for (int sweep = 0; sweep < 50; ++sweep) {
        bool changed = false;
        for (int i = 0; i < m; ++i) {
          const Cplx zeta = t(i) - b(i, i) * std::conj(v(i));
          if (zeta == Cplx(0, 0)) {
            trace.push_back(f);
            continue;
          }
          int pick = levels[i];
          double best_term = (level_phasor[levels[i]] * zeta).real();
          for (int l = 0; l < n_levels; ++l) {
            const double term = (level_phasor[l] * zeta).real();
            if (term > best_term) {
              best_term = term;
              pick = l;
            }
          }
          if (pick != levels[i]) {
            const Cplx v_new = mag * level_phasor[pick];
            t += b.col(i) * (std::conj(v_new) - std::conj(v(i)));
            v(i) = v_new;
            levels[i] = pick;
            changed = true;
            f = (v.transpose() * t).value().real();
          }
          trace.push_back(f);
        }
        if (!changed) break;
      }
      out.objective_traces.push_back(std::move(trace));
      if (f > best_f) {
        best_f = f;
        best_levels = levels;
      }
    }

    const RisLeg& leg = ch.legs[j];
    for (int i = 0; i < m; ++i) {
      out.profile.levels[leg.offset + i] = best_levels[i];
      out.profile.v(leg.offset + i) = mag * level_phasor[best_levels[i]];
    }
    out.objective += best_f;
  }
  return out;
}

/// Relaxation route: lift the phase vector of each sub-array to a PSD matrix
/// with fixed diagonal, solve the resulting SDP, then extract a unit-modulus
/// vector by Gaussian randomization scored on the true objective. Records
/// the relaxation optimum as an upper bound.
inline Stage1Result stage1_continuous(const ChannelSet& ch, const std::vector<double>& beta,
                                      int n_trials, Rng& rng) {
  const int m_total = ch.n_ris;
  const double mag = 1.0 / std::sqrt(static_cast<double>(m_total));
  const auto kernels = detail::stage1_kernels(ch, beta);

  Stage1Result out;
  out.profile.mode = PhaseMode::Continuous;
  out.profile.v.resize(m_total);

  for (size_t j = 0; j < kernels.size(); ++j) {
    const RisLeg& leg = ch.legs[j];
    const int m = static_cast<int>(kernels[j].rows());
    CVec v_seg;
    if (kernels[j].norm() == 0.0) {
      v_seg = CVec::Constant(m, Cplx(mag, 0.0));
    } else {
      // Work on u = conj(v): the objective is u^H B u, a standard quadratic.
      const double scale = kernels[j].norm();
      const Mat bs = sdp::hermitian_embed(kernels[j] / scale);
      sdp::SdpProblem prob;
      prob.blocks.push_back({sdp::BlockKind::Psd, 2 * m});
      prob.objective.terms.push_back({0, Mat(-0.5 * bs)});
      for (int i = 0; i < 2 * m; ++i) {
        Mat e = Mat::Zero(2 * m, 2 * m);
        e(i, i) = 1.0;
        prob.constraints.push_back({{{{0, e}}}, sdp::Relation::Eq, 1.0 / m_total});
      }
      const sdp::SdpSolution sol = sdp::solve(prob);
      if (sol.status != sdp::SolveStatus::Optimal)
        throw std::runtime_error(std::string("stage1 SDP: solver status ") +
                                 to_string(sol.status));
      // the dual value certifies the relaxation optimum from above
      out.sdr_bound += -sol.dual_obj * scale;

      const CMat u_star = sdp::hermitian_unembed(sol.x[0]);
      const CMat& b = kernels[j];
      auto shaper = [mag](const CVec& z) {
        CVec u(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i)
          u(i) = std::abs(z(i)) > 0 ? mag * z(i) / std::abs(z(i)) : Cplx(mag, 0.0);
        return u;
      };
      auto scorer = [&b](const CVec& u) {
        sdp::Score s;
        s.cost = -(u.adjoint() * b * u).value().real();
        s.feasible = true;
        return s;
      };
      const CVec u_hat = sdp::gaussian_randomize(u_star, n_trials, shaper, scorer, rng);
      v_seg = u_hat.conjugate();
    }
    out.profile.v.segment(leg.offset, m) = v_seg;
    out.objective += detail::leg_objective(kernels[j], v_seg);
  }
  return out;
}

inline PhaseProfile random_phase_profile(int m_total, Rng& rng) {
  PhaseProfile p;
  p.mode = PhaseMode::Random;
  p.v.resize(m_total);
  const double mag = 1.0 / std::sqrt(static_cast<double>(m_total));
  for (int i = 0; i < m_total; ++i)
    p.v(i) = std::polar(mag, 2.0 * kPi * uniform_unit(rng));
  return p;
}

inline PhaseProfile identity_phase_profile(int m_total) {
  PhaseProfile p;
  p.mode = PhaseMode::Identity;
  p.v = CVec::Constant(m_total, Cplx(1.0 / std::sqrt(static_cast<double>(m_total)), 0.0));
  return p;
}

struct BeamSolution {
  BeamSet w;
  double power_w = 0.0;
  double sdr_bound_w = 0.0;
  double scale_factor = 1.0;        // joint feasibility restoration factor
  std::vector<double> rank_ratios;  // lambda2/lambda1 per (n, k) block
  int randomization_trials = 0;
  int solver_iterations = 0;
  std::string status = "optimal";
};

namespace detail {

struct Stage2Data {
  double t = 1.0;  // power unit of the lifted variables
  double sigma = 0.0;
  std::vector<std::vector<CVec>> g_hat;              // [n-1][k] effective channel / sigma
  std::vector<std::vector<Mat>> q_emb;               // embed(g g^H)/2
  std::vector<std::vector<Mat>> d_emb;               // embed(hd hd^H)/2 (noise-normalized)
  std::vector<std::vector<std::vector<Mat>>> r_emb;  // [leg][n-1][k]
  std::vector<Vec> range_d;                          // per k, unit range direction, d comps
  std::vector<std::vector<Vec>> range_r;             // [leg][k]
};

inline Stage2Data stage2_data(const ChannelSet& ch, const PhaseProfile& phase,
                              const SystemConfig& cfg) {
  Stage2Data d;
  d.sigma = std::sqrt(cfg.noise_variance());
  const int n_sc = ch.n_subcarriers;
  const int n_ue = ch.n_ues;
  const int parts = static_cast<int>(ch.legs.size());
  const int dim = cfg.position_dim;

  d.g_hat.assign(n_sc, std::vector<CVec>(n_ue));
  d.q_emb.assign(n_sc, std::vector<Mat>(n_ue));
  d.d_emb.assign(n_sc, std::vector<Mat>(n_ue));
  d.r_emb.assign(parts, std::vector<std::vector<Mat>>(n_sc, std::vector<Mat>(n_ue)));
  for (int idx = 0; idx < n_sc; ++idx) {
    const int n = idx + 1;
    for (int k = 0; k < n_ue; ++k) {
      const CVec g = ch.effective_channel(n, k, cfg.obstruction[k], phase.v) / d.sigma;
      d.g_hat[idx][k] = g;
      d.q_emb[idx][k] = 0.5 * sdp::hermitian_embed(g * g.adjoint());
      const CVec hd = ch.direct[idx][k] / d.sigma;
      d.d_emb[idx][k] = 0.5 * sdp::hermitian_embed(hd * hd.adjoint());
      for (int j = 0; j < parts; ++j) {
        const CVec u = ch.leg_row(j, n, k, phase.v).adjoint() / d.sigma;
        d.r_emb[j][idx][k] = 0.5 * sdp::hermitian_embed(u * u.adjoint());
      }
    }
  }
  d.range_d.resize(n_ue);
  d.range_r.assign(parts, std::vector<Vec>(n_ue));
  for (int k = 0; k < n_ue; ++k) {
    const Vec3 u = cfg.ue_positions[k];
    d.range_d[k] = (u - cfg.bs.reference_point).normalized().head(dim);
    for (int j = 0; j < parts; ++j)
      d.range_r[j][k] = (u - ch.legs[j].geom.reference_point).normalized().head(dim);
  }
  return d;
}

inline double stage2_power_unit(const Stage2Data& d, const ChannelSet& ch,
                                const SystemConfig& cfg, const std::vector<double>& beta) {
  const double coef =
      8.0 * kPi * kPi * cfg.delta_f * cfg.delta_f / (kSpeedOfLight * kSpeedOfLight);
  double t = 0.0;
  double sum_n2 = 0.0;
  for (int n = 1; n <= ch.n_subcarriers; ++n) sum_n2 += static_cast<double>(n) * n;
  for (int k = 0; k < ch.n_ues; ++k) {
    if (beta[k] > 0) {
      double gmax = 0.0;
      for (int idx = 0; idx < ch.n_subcarriers; ++idx)
        gmax = std::max(gmax, d.g_hat[idx][k].squaredNorm());
      if (gmax > 0) t = std::max(t, beta[k] / gmax);
    }
    if (std::isfinite(cfg.peb_threshold[k])) {
      // The binding anchor is usually the weakest one, so size the power
      // unit by it rather than by the strongest path.
      double rho_weakest = kInf;
      if (cfg.obstruction[k]) {
        double best = 0.0;
        for (int idx = 0; idx < ch.n_subcarriers; ++idx)
          best = std::max(best, 2.0 * d.d_emb[idx][k].trace());
        rho_weakest = std::min(rho_weakest, best);
      }
      for (int j = 0; j < static_cast<int>(ch.legs.size()); ++j) {
        double best = 0.0;
        for (int idx = 0; idx < ch.n_subcarriers; ++idx)
          best = std::max(best, 2.0 * d.r_emb[j][idx][k].trace());
        rho_weakest = std::min(rho_weakest, best);
      }
      const double needed =
          cfg.position_dim / (cfg.peb_threshold[k] * cfg.peb_threshold[k] * coef * sum_n2);
      if (std::isfinite(rho_weakest) && rho_weakest > 0)
        t = std::max(t, needed / rho_weakest);
    }
  }
  return t > 0 ? t : 1.0;
}

inline Mat sym_basis(int dim, int i, int j) {
  Mat e = Mat::Zero(dim, dim);
  if (i == j) {
    e(i, i) = 1.0;
  } else {
    e(i, j) = 0.5;
    e(j, i) = 0.5;
  }
  return e;
}

/// Lifted transmit design: one PSD block per (subcarrier, UE) beam
/// covariance plus, per constrained UE, one PSD block holding the
/// Schur-complement form of the positioning constraint scaled to unit size.
inline sdp::SdpProblem stage2_problem(const Stage2Data& d, const ChannelSet& ch,
                                      const SystemConfig& cfg, const std::vector<double>& beta,
                                      bool include_rate, bool include_peb) {
  const int n_sc = ch.n_subcarriers;
  const int n_ue = ch.n_ues;
  const int nt2 = 2 * ch.n_tx;
  const int dim = cfg.position_dim;
  const double coef =
      8.0 * kPi * kPi * cfg.delta_f * cfg.delta_f / (kSpeedOfLight * kSpeedOfLight);

  sdp::SdpProblem prob;
  auto wblock = [&](int idx, int k) { return idx * n_ue + k; };
  for (int i = 0; i < n_sc * n_ue; ++i) prob.blocks.push_back({sdp::BlockKind::Psd, nt2});
  for (int idx = 0; idx < n_sc; ++idx)
    for (int k = 0; k < n_ue; ++k)
      prob.objective.terms.push_back({wblock(idx, k), Mat(0.5 * Mat::Identity(nt2, nt2))});

  if (include_rate) {
    for (int k = 0; k < n_ue; ++k) {
      if (!(beta[k] > 0)) continue;
      sdp::Constraint c;
      c.rel = sdp::Relation::Ge;
      c.rhs = beta[k];
      for (int idx = 0; idx < n_sc; ++idx)
        for (int i = 0; i < n_ue; ++i) {
          const double w = (i == k) ? 1.0 : -beta[k];
          c.expr.terms.push_back({wblock(idx, i), Mat(w * d.t * d.q_emb[idx][k])});
        }
      prob.constraints.push_back(std::move(c));
    }
  }

  if (include_peb) {
    for (int k = 0; k < n_ue; ++k) {
      const double delta = cfg.peb_threshold[k];
      if (!std::isfinite(delta)) continue;

      // Per-anchor range directions and rough information strengths at the
      // expected power scale; a whitening congruence keeps the constraint
      // block near unit scale even when the anchors differ by many orders.
      std::vector<Vec> q;
      std::vector<double> strength;
      auto add_anchor = [&](const Vec& dir, auto&& emb_of_n) {
        double s = 0.0;
        for (int idx = 0; idx < n_sc; ++idx) {
          const double n = idx + 1;
          s += coef * n * n * emb_of_n(idx).trace();
        }
        q.push_back(dir);
        strength.push_back(s * d.t);
      };
      if (cfg.obstruction[k])
        add_anchor(d.range_d[k], [&](int idx) -> const Mat& { return d.d_emb[idx][k]; });
      for (int j = 0; j < static_cast<int>(ch.legs.size()); ++j)
        add_anchor(d.range_r[j][k], [&](int idx) -> const Mat& { return d.r_emb[j][idx][k]; });

      Mat info_est = Mat::Zero(dim, dim);
      for (size_t a = 0; a < q.size(); ++a)
        info_est += strength[a] * q[a] * q[a].transpose();
      Eigen::SelfAdjointEigenSolver<Mat> eig(info_est);
      const double lmax = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
      const Vec lam = eig.eigenvalues().cwiseMax(1e-10 * lmax);
      const Mat whiten = eig.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
      std::vector<Vec> qw(q.size());
      for (size_t a = 0; a < q.size(); ++a) qw[a] = whiten.transpose() * q[a];

      const int yb = static_cast<int>(prob.blocks.size());
      prob.blocks.push_back({sdp::BlockKind::Psd, 2 * dim});
      // off-diagonal block pinned to the identity
      for (int a = 0; a < dim; ++a)
        for (int bcol = 0; bcol < dim; ++bcol) {
          sdp::Constraint c;
          c.rel = sdp::Relation::Eq;
          c.rhs = a == bcol ? 1.0 : 0.0;
          c.expr.terms.push_back({yb, sym_basis(2 * dim, a, dim + bcol)});
          prob.constraints.push_back(std::move(c));
        }
      // bottom-right block equals the whitened position information
      for (int a = 0; a < dim; ++a)
        for (int bcol = a; bcol < dim; ++bcol) {
          sdp::Constraint c;
          c.rel = sdp::Relation::Eq;
          c.rhs = 0.0;
          c.expr.terms.push_back({yb, sym_basis(2 * dim, dim + a, dim + bcol)});
          for (int idx = 0; idx < n_sc; ++idx) {
            const double n = idx + 1;
            Mat h = Mat::Zero(nt2, nt2);
            size_t anchor = 0;
            if (cfg.obstruction[k]) {
              h += qw[anchor](a) * qw[anchor](bcol) * d.d_emb[idx][k];
              ++anchor;
            }
            for (int j = 0; j < static_cast<int>(ch.legs.size()); ++j, ++anchor)
              h += qw[anchor](a) * qw[anchor](bcol) * d.r_emb[j][idx][k];
            h *= -coef * n * n * d.t;
            for (int i = 0; i < n_ue; ++i) c.expr.terms.push_back({wblock(idx, i), h});
          }
          prob.constraints.push_back(std::move(c));
        }
      // trace of the un-whitened slack matrix bounded by delta^2
      sdp::Constraint tr;
      tr.rel = sdp::Relation::Le;
      tr.rhs = delta * delta;
      Mat e = Mat::Zero(2 * dim, 2 * dim);
      e.topLeftCorner(dim, dim) = whiten.transpose() * whiten;
      tr.expr.terms.push_back({yb, e});
      prob.constraints.push_back(std::move(tr));
    }
  }
  return prob;
}

struct FeasReport {
  bool ok = true;
  double violation = 0.0;  // worst relative margin
};

inline FeasReport check_feasibility(const ChannelSet& ch, const BeamSet& w,
                                    const PhaseProfile& phase, const SystemConfig& cfg,
                                    const std::vector<double>& beta, double slack) {
  FeasReport rep;
  for (int k = 0; k < ch.n_ues; ++k) {
    if (beta[k] > 0) {
      const auto [gamma, rate] = sinr_rate(ch, w, phase, cfg, k);
      (void)gamma;
      const double deficit = cfg.rate_req[k] - rate;
      if (deficit > slack) rep.ok = false;
      rep.violation = std::max(rep.violation, deficit / std::max(1.0, cfg.rate_req[k]));
    }
    const double delta = cfg.peb_threshold[k];
    if (std::isfinite(delta)) {
      const EfimParts parts = efim_closed_form(ch, w, phase, k, cfg);
      const CrbPeb cp = crb_peb(parts.efim, PebMode::Pseudo);
      if (cp.deficiency > 0) {
        rep.ok = false;
        rep.violation = std::max(rep.violation, 1e6);
        continue;
      }
      const double excess = cp.peb / delta - 1.0;
      if (excess > slack) rep.ok = false;
      rep.violation = std::max(rep.violation, excess);
    }
  }
  return rep;
}

}  // namespace detail

/// Fixed-phase transmit power minimization: solves the lifted SDP with rate
/// and positioning constraints, then recovers beamformers per block by the
/// rank-one shortcut or Gaussian randomization. Randomized candidate sets
/// are restored to joint feasibility by a common power scale found by
/// bisection; both constraint families are monotone in that scale.
inline BeamSolution stage2_beamforming(const ChannelSet& ch, const PhaseProfile& phase,
                                       const SystemConfig& cfg, Rng& rng) {
  const int n_sc = ch.n_subcarriers;
  const int n_ue = ch.n_ues;
  const std::vector<double> beta = rate_weights(cfg);

  BeamSolution out;
  out.w = zero_beams(n_sc, n_ue, ch.n_tx);

  bool any_rate = false, any_peb = false;
  std::vector<int> rate_ues, peb_ues;
  for (int k = 0; k < n_ue; ++k) {
    if (beta[k] > 0) {
      any_rate = true;
      rate_ues.push_back(k);
    }
    if (std::isfinite(cfg.peb_threshold[k])) {
      any_peb = true;
      peb_ues.push_back(k);
    }
  }
  if (!any_rate && !any_peb) return out;  // nothing binds, zero power is optimal

  // A positioning constraint needs range directions spanning the position
  // space; with too few anchors no amount of power helps.
  for (int k : peb_ues) {
    Mat dirs(cfg.position_dim, (cfg.obstruction[k] ? 1 : 0) + ch.legs.size());
    int c = 0;
    if (cfg.obstruction[k])
      dirs.col(c++) =
          (cfg.ue_positions[k] - cfg.bs.reference_point).normalized().head(cfg.position_dim);
    for (const RisLeg& leg : ch.legs)
      dirs.col(c++) =
          (cfg.ue_positions[k] - leg.geom.reference_point).normalized().head(cfg.position_dim);
    Eigen::JacobiSVD<Mat> svd(dirs);
    const int rank =
        (svd.singularValues().array() > 1e-9 * svd.singularValues().maxCoeff()).count();
    if (rank < cfg.position_dim)
      throw InfeasibleConstraints(
          "peb constraint of ue " + std::to_string(k + 1) +
              " is structurally unattainable: anchor range directions span only " +
              std::to_string(rank) + " of " + std::to_string(cfg.position_dim) +
              " position dimensions",
          ConstraintFamily::Peb, {k});
  }

  const detail::Stage2Data data = [&] {
    detail::Stage2Data d = detail::stage2_data(ch, phase, cfg);
    d.t = detail::stage2_power_unit(d, ch, cfg, beta);
    return d;
  }();

  sdp::SdpProblem prob = detail::stage2_problem(data, ch, cfg, beta, true, true);
  sdp::SolverOptions opts;
  opts.max_iter = 200;
  sdp::SdpSolution sol = sdp::solve(prob, opts);
  out.solver_iterations = sol.iterations;

  if (sol.status == sdp::SolveStatus::Infeasible) {
    const auto rate_only = sdp::solve(detail::stage2_problem(data, ch, cfg, beta, true, false), opts);
    if (any_rate && rate_only.status == sdp::SolveStatus::Infeasible)
      throw InfeasibleConstraints("rate constraints are jointly unsatisfiable",
                                  ConstraintFamily::Rate, rate_ues);
    const auto peb_only = sdp::solve(detail::stage2_problem(data, ch, cfg, beta, false, true), opts);
    if (any_peb && peb_only.status == sdp::SolveStatus::Infeasible)
      throw InfeasibleConstraints("peb constraints are jointly unsatisfiable",
                                  ConstraintFamily::Peb, peb_ues);
    throw InfeasibleConstraints(
        "rate and peb constraints are individually satisfiable but jointly infeasible",
        ConstraintFamily::Joint, {});
  }
  if (sol.status == sdp::SolveStatus::MaxIter &&
      (sol.gap_rel > 1e-6 || sol.res_primal > 1e-6 || sol.res_dual > 1e-6))
    throw std::runtime_error("stage2 SDP did not converge");
  if (sol.status == sdp::SolveStatus::Unbounded)
    throw std::runtime_error("stage2 SDP reported an unbounded objective");
  out.status = sol.status == sdp::SolveStatus::Optimal ? "optimal" : "max_iter";

  // lifted solution, in watts
  std::vector<std::vector<CMat>> wstar(n_sc, std::vector<CMat>(n_ue));
  std::vector<std::vector<CVec>> dominant(n_sc, std::vector<CVec>(n_ue));
  std::vector<std::vector<CMat>> factor(n_sc, std::vector<CMat>(n_ue));
  std::vector<std::vector<bool>> rank_one(n_sc, std::vector<bool>(n_ue, true));
  out.sdr_bound_w = 0.0;
  bool all_rank_one = true;
  for (int idx = 0; idx < n_sc; ++idx)
    for (int k = 0; k < n_ue; ++k) {
      const CMat w = data.t * sdp::hermitian_unembed(sol.x[idx * n_ue + k]);
      wstar[idx][k] = w;
      out.sdr_bound_w += w.real().trace();
      Eigen::SelfAdjointEigenSolver<CMat> eig(w);
      const Vec lam = eig.eigenvalues().cwiseMax(0.0);
      const int dlen = static_cast<int>(lam.size());
      const double l1 = lam(dlen - 1);
      const double ratio = l1 > 0 ? (dlen > 1 ? lam(dlen - 2) / l1 : 0.0) : 0.0;
      out.rank_ratios.push_back(ratio);
      dominant[idx][k] = std::sqrt(l1) * eig.eigenvectors().col(dlen - 1);
      if (ratio >= 1e-8) {
        rank_one[idx][k] = false;
        all_rank_one = false;
        factor[idx][k] = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
      }
    }

  const double feas_slack = 1e-6;
  const int rounds = all_rank_one ? 1 : cfg.randomization_trials;
  double best_power = kInf;
  BeamSet best_w;
  double best_scale = 1.0;
  double least_violation = kInf;
  BeamSet least_violating;

  BeamSet cand = zero_beams(n_sc, n_ue, ch.n_tx);
  for (int round = 0; round < rounds; ++round) {
    for (int idx = 0; idx < n_sc; ++idx)
      for (int k = 0; k < n_ue; ++k) {
        if (round == 0 || rank_one[idx][k]) {
          cand[idx][k] = dominant[idx][k];
        } else {
          CVec z(ch.n_tx);
          for (int i = 0; i < ch.n_tx; ++i) z(i) = circular_gaussian(rng);
          CVec draw = factor[idx][k] * z;
          const double target = wstar[idx][k].real().trace();
          const double nrm = draw.norm();
          cand[idx][k] = nrm > 0 ? CVec(draw * std::sqrt(std::max(target, 0.0)) / nrm)
                                 : dominant[idx][k];
        }
      }
    ++out.randomization_trials;

    auto scaled = [&](double s) {
      BeamSet w = cand;
      for (auto& per_ue : w)
        for (auto& wk : per_ue) wk *= s;
      return w;
    };
    auto feas = [&](double s) {
      return detail::check_feasibility(ch, scaled(s), phase, cfg, beta, feas_slack);
    };

    double s_star = -1.0;
    if (const auto r0 = feas(1.0); r0.ok) {
      s_star = 1.0;
    } else {
      if (r0.violation < least_violation) {
        least_violation = r0.violation;
        least_violating = cand;
      }
      double lo = 1.0, hi = 2.0;
      bool found = false;
      while (hi <= 1048576.0) {
        if (feas(hi).ok) {
          found = true;
          break;
        }
        lo = hi;
        hi *= 2.0;
      }
      if (found) {
        for (int it = 0; it < 40; ++it) {
          const double mid = 0.5 * (lo + hi);
          (feas(mid).ok ? hi : lo) = mid;
        }
        s_star = hi;
      }
    }
    if (s_star > 0) {
      const double p = s_star * s_star * total_power(cand);
      if (p < best_power) {
        best_power = p;
        best_w = scaled(s_star);
        best_scale = s_star;
      }
    }
  }

  if (!std::isfinite(best_power)) {
    CVec flat(static_cast<Eigen::Index>(n_sc) * n_ue * ch.n_tx);
    Eigen::Index at = 0;
    for (const auto& per_ue : least_violating)
      for (const auto& wk : per_ue) {
        flat.segment(at, wk.size()) = wk;
        at += wk.size();
      }
    throw NoFeasibleCandidate("stage2 randomization found no feasible candidate set", flat,
                              least_violation);
  }
  out.w = std::move(best_w);
  out.scale_factor = best_scale;
  out.power_w = total_power(out.w);
  return out;
}

struct TwoStageResult {
  PhaseProfile phase;
  BeamSolution beams;
  MetricsReport metrics;
};

/// Full pipeline: build channels, pick the reflection phases per the
/// configured mode, solve the transmit design, evaluate all metrics.
/// Deterministic given the config seed.
inline TwoStageResult run_two_stage(const SystemConfig& cfg) {
  if (auto issues = cfg.validate(); !issues.empty())
    throw InvalidArgument("config: " + issues.front());
  const ChannelSet ch = assemble_channels(cfg);
  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  const std::vector<double> beta = rate_weights(cfg);

  TwoStageResult res;
  double stage1_obj = 0.0;
  double sdr_stage1 = 0.0;
  switch (cfg.phase_mode) {
    case PhaseMode::Discrete: {
      Stage1Result s1 = stage1_discrete(ch, beta, cfg.phase_levels(), cfg.stage1_starts, rng);
      stage1_obj = s1.objective;
      res.phase = std::move(s1.profile);
      break;
    }
    case PhaseMode::Continuous: {
      Stage1Result s1 = stage1_continuous(ch, beta, cfg.randomization_trials, rng);
      stage1_obj = s1.objective;
      sdr_stage1 = s1.sdr_bound;
      res.phase = std::move(s1.profile);
      break;
    }
    case PhaseMode::Random:
      res.phase = random_phase_profile(ch.n_ris, rng);
      stage1_obj = stage1_objective_value(ch, beta, res.phase.v);
      break;
    case PhaseMode::Identity:
      res.phase = identity_phase_profile(ch.n_ris);
      stage1_obj = stage1_objective_value(ch, beta, res.phase.v);
      break;
  }
  (void)sdr_stage1;

  res.beams = stage2_beamforming(ch, res.phase, cfg, rng);
  res.metrics = evaluate_metrics(ch, res.beams.w, res.phase, cfg);
  res.metrics.solver_status = res.beams.status;
  res.metrics.sdr_bound_power_w = res.beams.sdr_bound_w;
  res.metrics.sdr_gap =
      res.beams.sdr_bound_w > 0
          ? (res.beams.power_w - res.beams.sdr_bound_w) / res.beams.sdr_bound_w
          : 0.0;
  res.metrics.stage1_objective = stage1_obj;
  res.metrics.randomization_trials_used = res.beams.randomization_trials;
  return res;
}

}  // namespace rispac
