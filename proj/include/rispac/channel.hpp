#pragma once

#include <vector>

#include "rispac/common.hpp"
#include "rispac/config.hpp"
#include "rispac/geometry.hpp"
#include "rispac/types.hpp"

namespace rispac {

struct PathInfo {
  double distance = 0.0;  // meters
  double delay = 0.0;     // seconds, distance / c exactly
  double phi = 0.0;       // azimuth of departure toward the far end
  double theta = 0.0;     // elevation of departure toward the far end
};

/// Channels of one RIS sub-array. An unpartitioned surface is a single leg;
/// with partitioning each sub-grid gets its own reference point (the sub-grid
/// centroid) and therefore its own delays and angles.
struct RisLeg {
  ArrayGeometry geom;
  int offset = 0;  // first element index of this sub-array in the full phase vector
  PathInfo bs_to_ris;
  std::vector<PathInfo> ris_to_ue;             // per UE
  std::vector<std::vector<CVec>> ris_ue;       // [n-1][k], length geom.size()
  std::vector<CMat> bs_ris;                    // [n-1], geom.size() x N_t, rank 1
  std::vector<std::vector<Cplx>> gain_ris_ue;  // [n-1][k]
  std::vector<Cplx> gain_bs_ris;               // [n-1]
};

/// All channel legs per subcarrier, immutable after assembly. Storage index
/// n-1 corresponds to subcarrier n (sums run over n = 1..N). The direct
/// channels are stored unmasked; the obstruction flag is applied by the
/// metric and optimizer layers.
struct ChannelSet {
  int n_subcarriers = 0;
  int n_ues = 0;
  int n_tx = 0;
  int n_ris = 0;

  std::vector<PathInfo> bs_to_ue;              // per UE
  std::vector<std::vector<CVec>> direct;       // [n-1][k], length N_t
  std::vector<std::vector<Cplx>> gain_direct;  // [n-1][k]
  std::vector<RisLeg> legs;

  /// One sub-array's reflected row h_r^H diag(v_j) G_n, over transmit antennas.
  Eigen::RowVectorXcd leg_row(int leg, int n, int k, const CVec& v) const {
    const RisLeg& l = legs[leg];
    const CVec& hr = l.ris_ue[n - 1][k];
    const CVec seg = v.segment(l.offset, l.geom.size());
    return (hr.conjugate().cwiseProduct(seg)).transpose() * l.bs_ris[n - 1];
  }

  /// Full reflected row, summed over sub-arrays.
  Eigen::RowVectorXcd ris_row(int n, int k, const CVec& v) const {
    Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(n_tx);
    for (int j = 0; j < static_cast<int>(legs.size()); ++j) row += leg_row(j, n, k, v);
    return row;
  }

  /// Effective channel column g with g^H = chi * h_d^H + h_r^H diag(v) G_n.
  CVec effective_channel(int n, int k, int chi, const CVec& v) const {
    Eigen::RowVectorXcd row = ris_row(n, k, v);
    if (chi) row += static_cast<double>(chi) * direct[n - 1][k].adjoint();
    return row.adjoint();
  }
};

namespace detail {

inline PathInfo make_path(const Vec3& from, const Vec3& to) {
  PathInfo p;
  p.distance = (to - from).norm();
  p.delay = p.distance / kSpeedOfLight;
  const auto [phi, theta] = angles_to(from, to);
  p.phi = phi;
  p.theta = theta;
  return p;
}

inline double free_space_gain(double lambda, double distance) {
  return lambda / (4.0 * kPi * distance);
}

}  // namespace detail

namespace detail {

// One random phase per physical link, keyed by the endpoints so relabeling
// UEs permutes the channels exactly.
inline double link_phase(std::uint64_t seed, int tag, const Vec3& a, const Vec3& b) {
  std::uint64_t h = hash_mix(seed, static_cast<std::uint64_t>(tag));
  h = hash_point(h, a);
  h = hash_point(h, b);
  return 2.0 * kPi * ((static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53);
}

}  // namespace detail

/// Builds every channel leg of the configured system: one direct channel per
/// UE and one reflected chain per RIS sub-array and UE, each as gain * delay
/// phasor * steering vector at the subcarrier wavelength. Gain magnitudes are
/// free-space path loss per leg; each link gets one seed-derived random
/// phase, constant across subcarriers.
inline ChannelSet assemble_channels(const SystemConfig& cfg) {
  if (auto issues = cfg.validate(); !issues.empty())
    throw InvalidArgument("assemble_channels: " + issues.front());

  const int n_sc = cfg.n_subcarriers;
  const int n_ue = cfg.n_ues();
  const int parts = cfg.ris_partitions;

  ChannelSet ch;
  ch.n_subcarriers = n_sc;
  ch.n_ues = n_ue;
  ch.n_tx = cfg.n_tx();
  ch.n_ris = cfg.n_ris();

  std::vector<double> psi_direct(n_ue);
  for (int k = 0; k < n_ue; ++k)
    psi_direct[k] =
        detail::link_phase(cfg.seed, 1, cfg.bs.reference_point, cfg.ue_positions[k]);

  // Sub-array geometry: contiguous row blocks of the parent grid, so element
  // order within the full phase vector matches the parent row-major order.
  // Rows run along x, spreading the sub-array reference points horizontally.
  const int sub_rows = cfg.ris.rows / parts;
  const double spacing = cfg.ris.element_spacing;
  ch.legs.resize(parts);
  for (int j = 0; j < parts; ++j) {
    RisLeg& leg = ch.legs[j];
    leg.geom = upa_coordinates(sub_rows, cfg.ris.cols, spacing);
    const double x0 = -0.5 * (cfg.ris.rows - 1) * spacing;
    const double xc = x0 + (j * sub_rows + 0.5 * (sub_rows - 1)) * spacing;
    leg.geom.reference_point = cfg.ris.reference_point + Vec3(xc, 0, 0);
    leg.offset = j * sub_rows * cfg.ris.cols;

    const double psi_g =
        detail::link_phase(cfg.seed, 2, cfg.bs.reference_point, leg.geom.reference_point);
    std::vector<double> psi_ru(n_ue);
    for (int k = 0; k < n_ue; ++k)
      psi_ru[k] =
          detail::link_phase(cfg.seed, 3, leg.geom.reference_point, cfg.ue_positions[k]);

    leg.bs_to_ris = detail::make_path(cfg.bs.reference_point, leg.geom.reference_point);
    const auto [phi_arr, theta_arr] =
        angles_to(leg.geom.reference_point, cfg.bs.reference_point);
    leg.ris_to_ue.resize(n_ue);
    for (int k = 0; k < n_ue; ++k)
      leg.ris_to_ue[k] = detail::make_path(leg.geom.reference_point, cfg.ue_positions[k]);

    leg.ris_ue.resize(n_sc);
    leg.bs_ris.resize(n_sc);
    leg.gain_ris_ue.resize(n_sc);
    leg.gain_bs_ris.resize(n_sc);
    for (int idx = 0; idx < n_sc; ++idx) {
      const int n = idx + 1;
      const double lambda = subcarrier_wavelength(cfg.fc, cfg.delta_f, n);
      const double omega = 2.0 * kPi * n * cfg.delta_f;

      const Cplx g_g = detail::free_space_gain(lambda, leg.bs_to_ris.distance) *
                       std::polar(1.0, psi_g);
      const CVec a_arr = steering_vector(leg.geom, phi_arr, theta_arr, lambda);
      const CVec a_dep =
          steering_vector(cfg.bs, leg.bs_to_ris.phi, leg.bs_to_ris.theta, lambda);
      leg.gain_bs_ris[idx] = g_g;
      leg.bs_ris[idx] = g_g * std::polar(1.0, -omega * leg.bs_to_ris.delay) *
                        (a_arr * a_dep.adjoint());

      leg.ris_ue[idx].resize(n_ue);
      leg.gain_ris_ue[idx].resize(n_ue);
      for (int k = 0; k < n_ue; ++k) {
        const PathInfo& p = leg.ris_to_ue[k];
        const Cplx g_r =
            detail::free_space_gain(lambda, p.distance) * std::polar(1.0, psi_ru[k]);
        leg.gain_ris_ue[idx][k] = g_r;
        const CVec a = steering_vector(leg.geom, p.phi, p.theta, lambda);
        leg.ris_ue[idx][k] = std::conj(g_r * std::polar(1.0, -omega * p.delay)) * a;
      }
    }
  }

  ch.bs_to_ue.resize(n_ue);
  for (int k = 0; k < n_ue; ++k)
    ch.bs_to_ue[k] = detail::make_path(cfg.bs.reference_point, cfg.ue_positions[k]);

  ch.direct.resize(n_sc);
  ch.gain_direct.resize(n_sc);
  for (int idx = 0; idx < n_sc; ++idx) {
    const int n = idx + 1;
    const double lambda = subcarrier_wavelength(cfg.fc, cfg.delta_f, n);
    const double omega = 2.0 * kPi * n * cfg.delta_f;
    ch.direct[idx].resize(n_ue);
    ch.gain_direct[idx].resize(n_ue);
    for (int k = 0; k < n_ue; ++k) {
      const PathInfo& p = ch.bs_to_ue[k];
      const Cplx g_d =
          detail::free_space_gain(lambda, p.distance) * std::polar(1.0, psi_direct[k]);
      ch.gain_direct[idx][k] = g_d;
      const CVec a = steering_vector(cfg.bs, p.phi, p.theta, lambda);
      ch.direct[idx][k] = std::conj(g_d * std::polar(1.0, -omega * p.delay)) * a;
    }
  }
  return ch;
}

}  // namespace rispac
