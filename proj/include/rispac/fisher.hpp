#pragma once

#include <array>
#include <utility>

#include "rispac/channel.hpp"
#include "rispac/common.hpp"
#include "rispac/config.hpp"
#include "rispac/types.hpp"

namespace rispac {

using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Composite noiseless amplitudes of the direct and reflected path for UE k
/// at subcarrier n (1-based), with unit deterministic symbols: the received
/// signal decomposes as chi * a_d * e^{-j 2 pi n df tau_d} + a_r * e^{-j 2 pi
/// n df tau_r} + noise.
inline std::pair<Cplx, Cplx> alpha_terms(const ChannelSet& ch, const BeamSet& w,
                                         const PhaseProfile& phase, int k, int n,
                                         double delta_f) {
  if (ch.legs.size() != 1)
    throw InvalidArgument("alpha_terms: single-path decomposition requires an unpartitioned RIS");
  CVec wsum = CVec::Zero(ch.n_tx);
  for (const CVec& wi : w[n - 1]) wsum += wi;
  const Cplx dsum = (ch.direct[n - 1][k].adjoint() * wsum).value();
  const Cplx rsum = (ch.ris_row(n, k, phase.v) * wsum).value();
  // The stored channels carry the delay phasors; strip them so the pair is
  // the pure amplitude of each path.
  const double arg = 2.0 * kPi * n * delta_f;
  return {dsum * std::polar(1.0, arg * ch.bs_to_ue[k].delay),
          rsum * std::polar(1.0, arg * ch.legs[0].ris_to_ue[k].delay)};
}

/// Per-beam amplitude table for UE k: row n-1 holds one column per transmit
/// beam. Summing a column-wise product over beams gives the symbol-averaged
/// second moments that the rate/positioning expressions use.
struct AlphaTable {
  CMat direct;     // (N x K beams)
  CMat reflected;  // (N x K beams)
};

namespace detail {

inline Cplx delay_phasor(double delta_f, int n, double tau) {
  return std::polar(1.0, -2.0 * kPi * n * delta_f * tau);
}

}  // namespace detail

inline AlphaTable alpha_table(const ChannelSet& ch, const BeamSet& w, const PhaseProfile& phase,
                              int k, double delta_f) {
  if (ch.legs.size() != 1)
    throw InvalidArgument("alpha_table: single-path decomposition requires an unpartitioned RIS");
  const int n_sc = ch.n_subcarriers;
  const int n_beams = static_cast<int>(w.front().size());
  const double tau_d = ch.bs_to_ue[k].delay;
  const double tau_r = ch.legs[0].ris_to_ue[k].delay;
  AlphaTable t;
  t.direct.resize(n_sc, n_beams);
  t.reflected.resize(n_sc, n_beams);
  for (int idx = 0; idx < n_sc; ++idx) {
    const int n = idx + 1;
    // Strip the delay phasor so the remainder is the amplitude term.
    const Cplx und = Cplx(1, 0) / detail::delay_phasor(delta_f, n, tau_d);
    const Cplx unr = Cplx(1, 0) / detail::delay_phasor(delta_f, n, tau_r);
    const Eigen::RowVectorXcd row = ch.ris_row(n, k, phase.v);
    for (int i = 0; i < n_beams; ++i) {
      t.direct(idx, i) = und * (ch.direct[idx][k].adjoint() * w[idx][i]).value();
      t.reflected(idx, i) = unr * (row * w[idx][i]).value();
    }
  }
  return t;
}

/// Fisher information over [tau_d, tau_r, Re a_d, Im a_d, Re a_r, Im a_r]
/// for given per-subcarrier amplitudes, assembled from the analytic signal
/// derivatives with the 2/N0 * sum_n Re{dmu^H dmu} rule. This keeps the
/// same-path delay-amplitude couplings; the orthogonality approximation
/// below is what drops them.
inline Mat6 fim_channel(const CVec& alpha_d, const CVec& alpha_r, int chi, double tau_d,
                        double tau_r, double delta_f, double sigma2) {
  const int n_sc = static_cast<int>(alpha_d.size());
  Mat6 fim = Mat6::Zero();
  const double x = static_cast<double>(chi);
  for (int idx = 0; idx < n_sc; ++idx) {
    const int n = idx + 1;
    const double omega = 2.0 * kPi * n * delta_f;
    const Cplx ed = detail::delay_phasor(delta_f, n, tau_d);
    const Cplx er = detail::delay_phasor(delta_f, n, tau_r);
    Eigen::Vector<Cplx, 6> d;
    d(0) = Cplx(0, -omega) * x * alpha_d(idx) * ed;
    d(1) = Cplx(0, -omega) * alpha_r(idx) * er;
    d(2) = x * ed;
    d(3) = Cplx(0, 1) * x * ed;
    d(4) = er;
    d(5) = Cplx(0, 1) * er;
    fim += (d.conjugate() * d.transpose()).real();
  }
  return (2.0 / sigma2) * fim;
}

/// Central-difference reference for fim_channel: numerically differentiates
/// the noiseless signal with respect to each of the six parameters, per
/// subcarrier, and applies the same accumulation rule. Independent of the
/// analytic derivative path.
inline Mat6 fim_channel_fd(const CVec& alpha_d, const CVec& alpha_r, int chi, double tau_d,
                           double tau_r, double delta_f, double sigma2,
                           double rel_step = 1e-6) {
  const int n_sc = static_cast<int>(alpha_d.size());
  const double x = static_cast<double>(chi);
  const double tau_scale = std::max({std::abs(tau_d), std::abs(tau_r), 1e-12});
  double amp_scale = 1e-12;
  for (int i = 0; i < n_sc; ++i)
    amp_scale = std::max({amp_scale, std::abs(alpha_d(i)), std::abs(alpha_r(i))});

  Mat6 fim = Mat6::Zero();
  for (int idx = 0; idx < n_sc; ++idx) {
    const int n = idx + 1;
    auto mu = [&](const std::array<double, 6>& p) -> Cplx {
      const Cplx ad(p[2], p[3]);
      const Cplx ar(p[4], p[5]);
      return x * ad * detail::delay_phasor(delta_f, n, p[0]) +
             ar * detail::delay_phasor(delta_f, n, p[1]);
    };
    const std::array<double, 6> at = {tau_d,
                                      tau_r,
                                      alpha_d(idx).real(),
                                      alpha_d(idx).imag(),
                                      alpha_r(idx).real(),
                                      alpha_r(idx).imag()};
    Eigen::Vector<Cplx, 6> d;
    for (int p = 0; p < 6; ++p) {
      const double h = rel_step * (p < 2 ? tau_scale : amp_scale);
      std::array<double, 6> lo = at, hi = at;
      lo[p] -= h;
      hi[p] += h;
      d(p) = (mu(hi) - mu(lo)) / (2.0 * h);
    }
    fim += (d.conjugate() * d.transpose()).real();
  }
  return (2.0 / sigma2) * fim;
}

/// Large-bandwidth approximation: direct and reflected path components are
/// treated as orthogonal, leaving diag{J_tt_d, J_tt_r, chi^2, chi^2, 1, 1}.
inline Mat6 fim_orthogonal(const Mat6& fim, int chi) {
  Mat6 out = Mat6::Zero();
  const double x2 = static_cast<double>(chi) * chi;
  out(0, 0) = fim(0, 0);
  out(1, 1) = fim(1, 1);
  out(2, 2) = x2;
  out(3, 3) = x2;
  out(4, 4) = 1.0;
  out(5, 5) = 1.0;
  return out;
}

/// Change of variables from the channel parameters to [u, amplitudes]: the
/// first block carries the delay gradients d tau / du restricted to the
/// first position_dim coordinates, the amplitude block is identity.
inline Mat jacobian_upsilon(const Vec3& u, const Vec3& p, const Vec3& r, int position_dim) {
  if ((u - p).norm() < 1e-15 || (u - r).norm() < 1e-15)
    throw InvalidArgument("jacobian_upsilon: UE coincides with an anchor");
  const int d = position_dim;
  Mat ups = Mat::Zero(d + 4, 6);
  const Vec3 gd = (u - p) / (kSpeedOfLight * (u - p).norm());
  const Vec3 gr = (u - r) / (kSpeedOfLight * (u - r).norm());
  ups.block(0, 0, d, 1) = gd.head(d);
  ups.block(0, 1, d, 1) = gr.head(d);
  ups.block(d, 2, 4, 4).setIdentity();
  return ups;
}

struct EfimResult {
  Mat efim;               // position_dim x position_dim
  int nuisance_rank = 0;  // nuisance dimensions actually eliminated
  int nuisance_dim = 4;
};

/// Position-domain information: transforms the channel FIM with the Jacobian
/// and removes the amplitude nuisance block by Schur complement. A singular
/// nuisance block (blocked direct path) is handled by eliminating only its
/// invertible part, reported through nuisance_rank.
inline EfimResult efim_position(const Mat6& fim, const Mat& upsilon) {
  const int d = static_cast<int>(upsilon.rows()) - 4;
  const Mat j_loc = upsilon * fim * upsilon.transpose();
  const Mat a = j_loc.topLeftCorner(d, d);
  const Mat b = j_loc.topRightCorner(d, 4);
  const Mat c = j_loc.bottomRightCorner(4, 4);
  Eigen::SelfAdjointEigenSolver<Mat> eig(c);
  const double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double cutoff = 1e-12 * std::max(lmax, 1e-300);
  Mat cinv = Mat::Zero(4, 4);
  int rank = 0;
  for (int i = 0; i < 4; ++i) {
    if (eig.eigenvalues()(i) > cutoff) {
      cinv += eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose() /
              eig.eigenvalues()(i);
      ++rank;
    }
  }
  EfimResult res;
  res.efim = a - b * cinv * b.transpose();
  res.efim = 0.5 * (res.efim + res.efim.transpose()).eval();
  res.nuisance_rank = rank;
  return res;
}

struct EfimParts {
  Mat j_direct;     // direct-path information (before the obstruction factor)
  Mat j_reflected;  // reflected-path information, summed over sub-arrays
  Mat efim;         // chi * j_direct + j_reflected
};

/// Closed-form position EFIM: rank-one range-direction outer products
/// weighted by the per-subcarrier beam powers through each path. With a
/// partitioned RIS every sub-array contributes as its own anchor.
inline EfimParts efim_closed_form(const ChannelSet& ch, const BeamSet& w,
                                  const PhaseProfile& phase, int k, const SystemConfig& cfg) {
  const int d = cfg.position_dim;
  const double sigma2 = cfg.noise_variance();
  const double coef = 8.0 * kPi * kPi * cfg.delta_f * cfg.delta_f /
                      (kSpeedOfLight * kSpeedOfLight);
  const Vec3 u = cfg.ue_positions[k];

  auto range_outer = [&](const Vec3& anchor) {
    const Vec q3 = (u - anchor).normalized();
    const Vec q = q3.head(d);
    return Mat(q * q.transpose());
  };

  EfimParts parts;
  parts.j_direct = Mat::Zero(d, d);
  parts.j_reflected = Mat::Zero(d, d);

  const Mat psi_d = range_outer(cfg.bs.reference_point);
  for (int idx = 0; idx < ch.n_subcarriers; ++idx) {
    const int n = idx + 1;
    double rho = 0.0;
    for (const CVec& wi : w[idx]) rho += std::norm((ch.direct[idx][k].adjoint() * wi).value());
    parts.j_direct += coef * n * n * (rho / sigma2) * psi_d;
  }
  for (int j = 0; j < static_cast<int>(ch.legs.size()); ++j) {
    const Mat psi_r = range_outer(ch.legs[j].geom.reference_point);
    for (int idx = 0; idx < ch.n_subcarriers; ++idx) {
      const int n = idx + 1;
      const Eigen::RowVectorXcd row = ch.leg_row(j, n, k, phase.v);
      double rho = 0.0;
      for (const CVec& wi : w[idx]) rho += std::norm((row * wi).value());
      parts.j_reflected += coef * n * n * (rho / sigma2) * psi_r;
    }
  }
  parts.efim = cfg.obstruction[k] * parts.j_direct + parts.j_reflected;
  return parts;
}

struct CrbPeb {
  double crb = 0.0;  // m^2
  double peb = 0.0;  // m
  int deficiency = 0;
};

inline CrbPeb crb_peb(const Mat& efim, PebMode mode) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(efim);
  const double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  const double cutoff = 1e-12 * std::max(lmax, 1e-300);
  CrbPeb out;
  for (int i = 0; i < efim.rows(); ++i) {
    const double l = eig.eigenvalues()(i);
    if (l > cutoff)
      out.crb += 1.0 / l;
    else
      ++out.deficiency;
  }
  if (out.deficiency > 0 && mode == PebMode::Strict) {
    Mat null_dirs(efim.rows(), out.deficiency);
    std::string dirs;
    int c = 0;
    for (int i = 0; i < efim.rows(); ++i) {
      if (eig.eigenvalues()(i) <= cutoff) {
        null_dirs.col(c++) = eig.eigenvectors().col(i);
        dirs += " [";
        for (int a = 0; a < efim.rows(); ++a)
          dirs += (a ? "," : "") + std::to_string(eig.eigenvectors()(a, i));
        dirs += "]";
      }
    }
    throw SingularInformation(
        "position information is rank deficient in " + std::to_string(out.deficiency) +
            " direction(s):" + dirs,
        out.deficiency, null_dirs);
  }
  out.peb = std::sqrt(out.crb);
  return out;
}

/// Everything the two information routes produce for one UE: the exact
/// channel FIM (per-beam contributions summed), its diagonal approximation,
/// the position-domain transform, and the closed-form split. Requires an
/// unpartitioned RIS (the two-path parameterization has a single reflected
/// delay).
struct FisherBundle {
  Mat6 j_eta = Mat6::Zero();
  Mat6 j_eta_approx = Mat6::Zero();
  Mat upsilon;
  Mat j_loc;
  Mat efim;  // through the transform + Schur route
  Mat j_d;   // closed-form direct part
  Mat j_r;   // closed-form reflected part
};

inline FisherBundle fisher_bundle(const ChannelSet& ch, const BeamSet& w,
                                  const PhaseProfile& phase, int k, const SystemConfig& cfg) {
  if (ch.legs.size() != 1)
    throw InvalidArgument("fisher_bundle: requires an unpartitioned RIS");
  const int chi = cfg.obstruction[k];
  const double tau_d = ch.bs_to_ue[k].delay;
  const double tau_r = ch.legs[0].ris_to_ue[k].delay;
  const AlphaTable at = alpha_table(ch, w, phase, k, cfg.delta_f);

  FisherBundle b;
  // Beams carry uncorrelated unit-amplitude symbols, so their information
  // adds; each beam contributes one two-path FIM.
  for (int i = 0; i < at.direct.cols(); ++i)
    b.j_eta += fim_channel(at.direct.col(i), at.reflected.col(i), chi, tau_d, tau_r,
                           cfg.delta_f, cfg.noise_variance());
  b.j_eta_approx = fim_orthogonal(b.j_eta, chi);
  b.upsilon = jacobian_upsilon(cfg.ue_positions[k], cfg.bs.reference_point,
                               ch.legs[0].geom.reference_point, cfg.position_dim);
  b.j_loc = b.upsilon * b.j_eta_approx * b.upsilon.transpose();
  b.efim = efim_position(b.j_eta_approx, b.upsilon).efim;
  const EfimParts parts = efim_closed_form(ch, w, phase, k, cfg);
  b.j_d = parts.j_direct;
  b.j_r = parts.j_reflected;
  return b;
}

}  // namespace rispac
