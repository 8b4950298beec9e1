#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rispac {

using Cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w * 1e3); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown by strict-mode CRB/PEB evaluation when the information matrix is
/// rank deficient; carries the unobservable directions.
class SingularInformation : public std::runtime_error {
 public:
  SingularInformation(const std::string& what, int deficiency, Mat null_directions)
      : std::runtime_error(what),
        deficiency(deficiency),
        null_directions(std::move(null_directions)) {}
  int deficiency;
  Mat null_directions;  // columns span the unobservable subspace
};

enum class ConstraintFamily { Rate, Peb, Joint };

inline const char* to_string(ConstraintFamily f) {
  switch (f) {
    case ConstraintFamily::Rate: return "rate";
    case ConstraintFamily::Peb: return "peb";
    default: return "joint";
  }
}

class InfeasibleConstraints : public std::runtime_error {
 public:
  InfeasibleConstraints(const std::string& what, ConstraintFamily family,
                        std::vector<int> ue_indices)
      : std::runtime_error(what), family(family), ue_indices(std::move(ue_indices)) {}
  ConstraintFamily family;
  std::vector<int> ue_indices;
};

class NoFeasibleCandidate : public std::runtime_error {
 public:
  NoFeasibleCandidate(const std::string& what, CVec best_candidate, double best_violation)
      : std::runtime_error(what),
        best_candidate(std::move(best_candidate)),
        best_violation(best_violation) {}
  CVec best_candidate;    // least-violating candidate seen
  double best_violation;  // its worst constraint margin
};

// All randomness flows through explicitly passed generators seeded from the
// experiment config. Gaussian draws use Box-Muller on raw 53-bit uniforms so
// sequences do not depend on the standard library's distribution internals.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ v); }

inline std::uint64_t hash_point(std::uint64_t h, const Vec3& p) {
  for (int i = 0; i < 3; ++i) {
    std::uint64_t bits;
    const double v = p(i);
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = hash_mix(h, bits);
  }
  return h;
}

inline double uniform_unit(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;  // in (0,1)
}

inline double gaussian(Rng& rng) {
  const double u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline Cplx circular_gaussian(Rng& rng) {
  const double re = gaussian(rng);
  const double im = gaussian(rng);
  return Cplx(re, im) * std::numbers::sqrt2 / 2.0;  // CN(0,1)
}

}  // namespace rispac
