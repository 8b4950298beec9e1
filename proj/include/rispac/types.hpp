#pragma once

#include <vector>

#include "rispac/common.hpp"
#include "rispac/config.hpp"

namespace rispac {

/// RIS reflection vector; entries have magnitude 1/sqrt(M). In discrete mode
/// `levels` records the chosen quantization index per element.
struct PhaseProfile {
  CVec v;
  PhaseMode mode = PhaseMode::Identity;
  int n_levels = 0;  // discrete mode: number of phase levels L
  std::vector<int> levels;
};

/// Transmit beamformers indexed [subcarrier n-1][ue].
using BeamSet = std::vector<std::vector<CVec>>;

inline double total_power(const BeamSet& w) {
  double p = 0.0;
  for (const auto& per_ue : w)
    for (const auto& wk : per_ue) p += wk.squaredNorm();
  return p;
}

inline BeamSet zero_beams(int n_subcarriers, int n_ues, int n_tx) {
  return BeamSet(n_subcarriers, std::vector<CVec>(n_ues, CVec::Zero(n_tx)));
}

}  // namespace rispac
