#pragma once

#include <functional>
#include <string>

#include "rispac/common.hpp"

namespace rispac::sdp {

struct Score {
  double cost = 0.0;
  bool feasible = false;
  double violation = 0.0;  // worst constraint margin when infeasible
};

using Shaper = std::function<CVec(const CVec&)>;
using Scorer = std::function<Score(const CVec&)>;

struct RandomizeReport {
  int trials_used = 0;
  bool rank_one_shortcut = false;
  double best_cost = 0.0;
  double rank_ratio = 0.0;  // second / largest eigenvalue
};

/// Extracts a vector from a lifted PSD solution: draws candidates from a
/// zero-mean complex Gaussian with covariance X*, shapes each one onto the
/// feasible set, scores it, and keeps the cheapest feasible candidate. A
/// numerically rank-one X* short-circuits to its scaled dominant eigenvector.
inline CVec gaussian_randomize(const CMat& x_star, int n_trials, const Shaper& shaper,
                               const Scorer& scorer, Rng& rng,
                               RandomizeReport* report = nullptr) {
  if (n_trials < 1) throw InvalidArgument("gaussian_randomize: n_trials must be >= 1");
  const Eigen::Index d = x_star.rows();
  Eigen::SelfAdjointEigenSolver<CMat> eig(0.5 * (x_star + x_star.adjoint()));
  Vec lam = eig.eigenvalues().cwiseMax(0.0);
  const double l1 = lam(d - 1);
  const double l2 = d > 1 ? lam(d - 2) : 0.0;
  const double ratio = l1 > 0 ? l2 / l1 : 0.0;
  if (report) report->rank_ratio = ratio;

  CVec best;
  double best_cost = kInf;
  double best_violation = kInf;
  CVec least_violating;
  int used = 0;

  auto consider = [&](const CVec& raw) {
    const CVec cand = shaper ? shaper(raw) : raw;
    const Score sc = scorer(cand);
    ++used;
    if (sc.feasible && sc.cost < best_cost) {
      best_cost = sc.cost;
      best = cand;
    }
    if (!sc.feasible && sc.violation < best_violation) {
      best_violation = sc.violation;
      least_violating = cand;
    }
    return sc.feasible;
  };

  const CVec dominant = std::sqrt(l1) * eig.eigenvectors().col(d - 1);
  if (ratio < 1e-8) {
    if (report) report->rank_one_shortcut = true;
    if (consider(dominant)) {
      if (report) {
        report->trials_used = used;
        report->best_cost = best_cost;
      }
      return best;
    }
  }

  const CMat factor = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
  for (int t = used; t < n_trials; ++t) {
    CVec z(d);
    for (Eigen::Index i = 0; i < d; ++i) z(i) = circular_gaussian(rng);
    consider(factor * z);
  }
  if (report) {
    report->trials_used = used;
    report->best_cost = best_cost;
  }
  if (best.size() == 0)
    throw NoFeasibleCandidate("gaussian_randomize: no feasible candidate in " +
                                  std::to_string(used) + " trials (best violation " +
                                  std::to_string(best_violation) + ")",
                              least_violating, best_violation);
  return best;
}

}  // namespace rispac::sdp
