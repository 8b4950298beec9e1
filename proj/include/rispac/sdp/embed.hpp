#pragma once

#include "rispac/common.hpp"

namespace rispac::sdp {

/// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian
/// matrix. PSD is preserved both ways, eigenvalues double their multiplicity,
/// and <embed(A), embed(B)> = 2 Re<A, B> (callers divide coefficients by 2).
inline Mat hermitian_embed(const CMat& h) {
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("hermitian_embed: input is not Hermitian");
  const Eigen::Index d = h.rows();
  Mat out(2 * d, 2 * d);
  out.topLeftCorner(d, d) = h.real();
  out.bottomRightCorner(d, d) = h.real();
  out.topRightCorner(d, d) = -h.imag();
  out.bottomLeftCorner(d, d) = h.imag();
  return 0.5 * (out + out.transpose());
}

/// Projects a real symmetric 2d x 2d matrix back onto the embedded complex
/// structure and returns the Hermitian matrix. For matrices produced by
/// hermitian_embed this is exact; for solver output it averages away any
/// structure-breaking component (the feasible sets and objectives used here
/// are invariant under that averaging).
inline CMat hermitian_unembed(const Mat& x) {
  const Eigen::Index d = x.rows() / 2;
  if (x.rows() != 2 * d || x.cols() != 2 * d)
    throw InvalidArgument("hermitian_unembed: size must be even");
  const Mat re = 0.5 * (x.topLeftCorner(d, d) + x.bottomRightCorner(d, d));
  const Mat im = 0.5 * (x.bottomLeftCorner(d, d) - x.topRightCorner(d, d));
  CMat h = re.cast<Cplx>() + Cplx(0, 1) * im.cast<Cplx>();
  return 0.5 * (h + h.adjoint());
}

}  // namespace rispac::sdp
