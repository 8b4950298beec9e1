#pragma once

#include <cmath>
#include <utility>

#include "rispac/common.hpp"

namespace rispac {

/// Uniform planar array: element positions are stored relative to the
/// reference point, zero-mean, spanning the x-z plane (rows go along x,
/// columns along z, boresight along y).
struct ArrayGeometry {
  Eigen::Matrix3Xd element_coords;  // meters, local frame, one column per element
  Vec3 reference_point = Vec3::Zero();
  int rows = 1;
  int cols = 1;
  double element_spacing = 0.0;

  int size() const { return static_cast<int>(element_coords.cols()); }
};

inline ArrayGeometry upa_coordinates(int rows, int cols, double spacing) {
  if (rows < 1 || cols < 1) throw InvalidArgument("upa_coordinates: rows and cols must be >= 1");
  if (!(spacing > 0.0)) throw InvalidArgument("upa_coordinates: spacing must be > 0");
  ArrayGeometry g;
  g.rows = rows;
  g.cols = cols;
  g.element_spacing = spacing;
  g.element_coords.resize(3, static_cast<Eigen::Index>(rows) * cols);
  const double x0 = -0.5 * (rows - 1) * spacing;
  const double z0 = -0.5 * (cols - 1) * spacing;
  Eigen::Index e = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c, ++e)
      g.element_coords.col(e) = Vec3(x0 + r * spacing, 0.0, z0 + c * spacing);
  return g;
}

inline double subcarrier_wavelength(double fc, double delta_f, int n) {
  return kSpeedOfLight / (fc + n * delta_f);
}

/// Wavevector for a propagation direction (azimuth phi in the x-y plane,
/// elevation theta from +z); norm is 2*pi/lambda.
inline Vec3 wavevector(double phi, double theta, double lambda) {
  const double k = 2.0 * kPi / lambda;
  const double st = std::sin(theta);
  return Vec3(k * st * std::cos(phi), k * st * std::sin(phi), k * std::cos(theta));
}

/// Azimuth/elevation of the direction from one point to another.
/// theta in [0, pi] measured from +z; phi in (-pi, pi]; phi = 0 at zenith.
inline std::pair<double, double> angles_to(const Vec3& from, const Vec3& to) {
  const Vec3 d = to - from;
  const double dist = d.norm();
  if (!(dist > 0.0)) throw InvalidArgument("angles_to: points coincide");
  const double theta = std::acos(std::clamp(d.z() / dist, -1.0, 1.0));
  const double rho = std::hypot(d.x(), d.y());
  const double phi = (rho > 0.0) ? std::atan2(d.y(), d.x()) : 0.0;
  return {phi, theta};
}

/// Element i carries exp(j <coords_i, kappa>); every entry has unit modulus.
inline CVec steering_vector(const ArrayGeometry& geom, double phi, double theta, double lambda) {
  const Vec3 kappa = wavevector(phi, theta, lambda);
  const Vec phases = geom.element_coords.transpose() * kappa;
  CVec a(phases.size());
  for (Eigen::Index i = 0; i < phases.size(); ++i)
    a(i) = std::polar(1.0, phases(i));
  return a;
}

}  // namespace rispac
