#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rispac/common.hpp"
#include "rispac/sdp/problem.hpp"

namespace rispac::sdp {

struct SolverOptions {
  double tol = 1e-8;  // relative gap and feasibility target, clamped to <= 1e-7
  int max_iter = 100;
  double step_fraction = 0.98;  // fraction-to-boundary
  double infeas_tol = 1e-8;     // certificate acceptance threshold
};

namespace detail {

// Per-block state of the infeasible-start primal-dual iteration with
// Nesterov-Todd scaling. NonNeg blocks run the same algebra elementwise.
struct BlockState {
  BlockKind kind;
  int size;
  // psd
  Mat x, s, g, ginv;
  Vec d;  // scaling-point spectrum: Xhat = Shat = diag(d)
  // nonneg (size x 1)
  Vec xv, sv, wv, dv;
};

inline double block_inner(const BlockState& b, const Mat& coeff, bool primal) {
  if (b.kind == BlockKind::Psd) return (coeff.cwiseProduct(primal ? b.x : b.s)).sum();
  return coeff.col(0).dot(primal ? b.xv : b.sv);
}

// Largest step keeping the block in the cone interior; +inf if unconstrained.
inline double max_step_psd(const Mat& x, const Mat& dx) {
  Eigen::LLT<Mat> llt(x);
  const Mat l = llt.matrixL();
  const Mat t = l.triangularView<Eigen::Lower>().solve(dx).transpose();
  const Mat u = l.triangularView<Eigen::Lower>().solve(t);
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (u + u.transpose()));
  const double lmin = eig.eigenvalues().minCoeff();
  return lmin >= 0 ? kInf : -1.0 / lmin;
}

inline double max_step_vec(const Vec& x, const Vec& dx) {
  double a = kInf;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0) a = std::min(a, -x(i) / dx(i));
  return a;
}

}  // namespace detail

/// Primal-dual interior-point solve: NT-scaled symmetrized Newton directions
/// with a Mehrotra predictor-corrector and 0.98 fraction-to-boundary steps.
/// Inequalities become nonnegative slacks internally. Infeasibility and
/// unboundedness are reported through ray certificates.
inline SdpSolution solve(const SdpProblem& problem, SolverOptions opts = {}) {
  problem.validate();
  opts.tol = std::min(opts.tol, 1e-7);

  // --- canonicalize: equality constraints plus one slack block -------------
  const int n_orig_blocks = static_cast<int>(problem.blocks.size());
  std::vector<BlockSpec> blocks = problem.blocks;
  int n_ineq = 0;
  for (const Constraint& c : problem.constraints)
    if (c.rel != Relation::Eq) ++n_ineq;
  const int slack_block = n_ineq > 0 ? n_orig_blocks : -1;
  if (n_ineq > 0) blocks.push_back({BlockKind::NonNeg, n_ineq});
  const int nb = static_cast<int>(blocks.size());
  const int m = static_cast<int>(problem.constraints.size());

  std::vector<std::vector<BlockTerm>> acons(m);
  Vec b(m);
  Vec row_scale(m);
  {
    int slack_idx = 0;
    for (int i = 0; i < m; ++i) {
      const Constraint& c = problem.constraints[i];
      acons[i] = c.expr.terms;
      if (c.rel != Relation::Eq) {
        Mat e = Mat::Zero(n_ineq, 1);
        e(slack_idx++, 0) = c.rel == Relation::Le ? 1.0 : -1.0;
        acons[i].push_back({slack_block, e});
      }
      b(i) = c.rhs;
      double nrm = 0.0;
      for (const BlockTerm& t : acons[i]) nrm += t.coeff.squaredNorm();
      row_scale(i) = std::max(1.0, std::sqrt(nrm));
      for (BlockTerm& t : acons[i]) t.coeff /= row_scale(i);
      b(i) /= row_scale(i);
    }
  }
  std::vector<Mat> cmat(nb);
  for (int bI = 0; bI < nb; ++bI)
    cmat[bI] = blocks[bI].kind == BlockKind::Psd ? Mat::Zero(blocks[bI].size, blocks[bI].size)
                                                 : Mat::Zero(blocks[bI].size, 1);
  for (const BlockTerm& t : problem.objective.terms) cmat[t.block] += t.coeff;

  // --- flattened layout for constraint algebra -----------------------------
  std::vector<int> offset(nb + 1, 0);
  double nu = 0;
  for (int bI = 0; bI < nb; ++bI) {
    const int s = blocks[bI].size;
    offset[bI + 1] = offset[bI] + (blocks[bI].kind == BlockKind::Psd ? s * s : s);
    nu += s;
  }
  const int flat_len = offset[nb];
  Mat aflat = Mat::Zero(m, flat_len);
  for (int i = 0; i < m; ++i)
    for (const BlockTerm& t : acons[i])
      aflat.row(i).segment(offset[t.block], t.coeff.size()) +=
          Eigen::Map<const Vec>(t.coeff.data(), t.coeff.size()).transpose();

  double c_norm = 0.0, a_norm_max = 0.0, b_max = 0.0;
  for (int bI = 0; bI < nb; ++bI) c_norm += cmat[bI].squaredNorm();
  c_norm = std::sqrt(c_norm);
  for (int i = 0; i < m; ++i) {
    a_norm_max = std::max(a_norm_max, aflat.row(i).norm());
    b_max = std::max(b_max, std::abs(b(i)) / (1.0 + aflat.row(i).norm()));
  }

  // --- state ----------------------------------------------------------------
  std::vector<detail::BlockState> st(nb);
  const double x0 = std::max(1.0, b_max);
  const double s0 = std::max({1.0, c_norm / std::sqrt(std::max(nu, 1.0)), a_norm_max});
  for (int bI = 0; bI < nb; ++bI) {
    st[bI].kind = blocks[bI].kind;
    st[bI].size = blocks[bI].size;
    if (st[bI].kind == BlockKind::Psd) {
      st[bI].x = x0 * Mat::Identity(st[bI].size, st[bI].size);
      st[bI].s = s0 * Mat::Identity(st[bI].size, st[bI].size);
    } else {
      st[bI].xv = Vec::Constant(st[bI].size, x0);
      st[bI].sv = Vec::Constant(st[bI].size, s0);
    }
  }
  Vec y = Vec::Zero(m);

  SdpSolution sol;
  sol.y = Vec::Zero(m);

  auto flatten = [&](const std::vector<Mat>& mats, const std::vector<Vec>& vecs) {
    Vec out(flat_len);
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd)
        out.segment(offset[bI], mats[bI].size()) =
            Eigen::Map<const Vec>(mats[bI].data(), mats[bI].size());
      else
        out.segment(offset[bI], vecs[bI].size()) = vecs[bI];
    }
    return out;
  };

  auto finalize = [&](SolveStatus status) {
    sol.status = status;
    sol.x.resize(n_orig_blocks);
    sol.s.resize(n_orig_blocks);
    for (int bI = 0; bI < n_orig_blocks; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        sol.x[bI] = st[bI].x;
        sol.s[bI] = st[bI].s;
      } else {
        sol.x[bI] = st[bI].xv;
        sol.s[bI] = st[bI].sv;
      }
    }
    sol.y = Vec(m);
    for (int i = 0; i < m; ++i) sol.y(i) = y(i) / row_scale(i);
    return sol;
  };

  std::vector<Mat> rd(nb), rc(nb), dxa(nb), dsa(nb), dx(nb), ds(nb), wrdw(nb);
  std::vector<Vec> rdv(nb), rcv(nb), dxav(nb), dsav(nb), dxv(nb), dsv(nb), wrdwv(nb);

  int stall = 0;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    // residuals and stats
    double xs = 0.0, pobj = 0.0;
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        xs += (st[bI].x.cwiseProduct(st[bI].s)).sum();
        pobj += (cmat[bI].cwiseProduct(st[bI].x)).sum();
      } else {
        xs += st[bI].xv.dot(st[bI].sv);
        pobj += cmat[bI].col(0).dot(st[bI].xv);
      }
    }
    const double mu = xs / nu;
    const double dobj = b.dot(y);

    const Vec xflat = flatten(
        [&] {
          std::vector<Mat> v(nb);
          for (int bI = 0; bI < nb; ++bI)
            if (st[bI].kind == BlockKind::Psd) v[bI] = st[bI].x;
          return v;
        }(),
        [&] {
          std::vector<Vec> v(nb);
          for (int bI = 0; bI < nb; ++bI)
            if (st[bI].kind != BlockKind::Psd) v[bI] = st[bI].xv;
          return v;
        }());
    const Vec rp = b - aflat * xflat;

    double rd_norm2 = 0.0;
    const Vec aty = aflat.transpose() * y;
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        Mat atyb = Eigen::Map<const Mat>(aty.data() + offset[bI], st[bI].size, st[bI].size);
        rd[bI] = cmat[bI] - st[bI].s - 0.5 * (atyb + atyb.transpose());
        rd_norm2 += rd[bI].squaredNorm();
      } else {
        rdv[bI] = cmat[bI].col(0) - st[bI].sv - aty.segment(offset[bI], st[bI].size);
        rd_norm2 += rdv[bI].squaredNorm();
      }
    }

    const double res_p = rp.norm() / (1.0 + b.norm());
    const double res_d = std::sqrt(rd_norm2) / (1.0 + c_norm);
    const double gap_rel = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    sol.history.push_back({pobj, dobj, mu, res_p, res_d});
    sol.primal_obj = pobj;
    sol.dual_obj = dobj;
    sol.gap_rel = gap_rel;
    sol.res_primal = res_p;
    sol.res_dual = res_d;
    sol.iterations = iter;

    if (gap_rel <= opts.tol && res_p <= opts.tol && res_d <= opts.tol)
      return finalize(SolveStatus::Optimal);

    // ray certificates (skipped at the initial point, which can satisfy the
    // scale tests vacuously)
    const double by = b.dot(y);
    if (iter >= 1 && by > 1e-12) {
      double num = 0.0;
      for (int bI = 0; bI < nb; ++bI)
        num += st[bI].kind == BlockKind::Psd ? (cmat[bI] - rd[bI]).squaredNorm()
                                             : (cmat[bI].col(0) - rdv[bI]).squaredNorm();
      const double cert = std::sqrt(num) / by;
      const double tol_here = opts.infeas_tol * (stall > 1 ? 1e2 : 1.0);
      if (cert <= tol_here * (1.0 + y.norm() / by)) {
        sol.certificate_residual = cert;
        return finalize(SolveStatus::Infeasible);
      }
    }
    if (iter >= 1 && pobj < -1e-12) {
      const double cert = (aflat * xflat).norm() / -pobj;
      const double tol_here = opts.infeas_tol * (stall > 1 ? 1e2 : 1.0);
      if (cert <= tol_here * (1.0 + xflat.norm() / -pobj)) {
        sol.certificate_residual = cert;
        return finalize(SolveStatus::Unbounded);
      }
    }
    if (mu < 1e-300) break;

    // NT scaling per block
    bool scale_ok = true;
    for (int bI = 0; bI < nb && scale_ok; ++bI) {
      detail::BlockState& s = st[bI];
      if (s.kind == BlockKind::Psd) {
        Eigen::LLT<Mat> lltx(s.x), llts(s.s);
        if (lltx.info() != Eigen::Success || llts.info() != Eigen::Success) {
          scale_ok = false;
          break;
        }
        const Mat lx = lltx.matrixL();
        const Mat ls = llts.matrixL();
        Eigen::JacobiSVD<Mat> svd(ls.transpose() * lx,
                                  Eigen::ComputeFullU | Eigen::ComputeFullV);
        s.d = svd.singularValues();
        const Vec dih = s.d.cwiseSqrt().cwiseInverse();
        s.g = lx * svd.matrixV() * dih.asDiagonal();
        Mat lx_inv = Mat::Identity(s.size, s.size);
        lx.triangularView<Eigen::Lower>().solveInPlace(lx_inv);
        s.ginv = s.d.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() * lx_inv;
      } else {
        s.dv = (s.xv.cwiseProduct(s.sv)).cwiseSqrt();
        s.wv = (s.xv.cwiseQuotient(s.sv)).cwiseSqrt();
      }
    }
    if (!scale_ok) break;

    // Schur complement M = A(W . W) A^T in scaled coordinates
    Mat atilde = Mat::Zero(m, flat_len);
    for (int i = 0; i < m; ++i) {
      for (const BlockTerm& t : acons[i]) {
        const detail::BlockState& s = st[t.block];
        if (s.kind == BlockKind::Psd) {
          const Mat gt = s.g.transpose() * t.coeff * s.g;
          atilde.row(i).segment(offset[t.block], gt.size()) +=
              Eigen::Map<const Vec>(gt.data(), gt.size()).transpose();
        } else {
          atilde.row(i).segment(offset[t.block], s.size) +=
              (s.wv.cwiseProduct(t.coeff.col(0))).transpose();
        }
      }
    }
    Mat schur = atilde * atilde.transpose();
    Eigen::LLT<Mat> schur_llt(schur);
    double ridge = 1e-12 * schur.trace();
    int tries = 0;
    while (schur_llt.info() != Eigen::Success && tries < 4) {
      schur += ridge * Mat::Identity(m, m);
      sol.ridge_used = true;
      schur_llt.compute(schur);
      ridge *= 100.0;
      ++tries;
    }
    if (m > 0 && schur_llt.info() != Eigen::Success) break;

    // W R_d W per block (fixed for both solves)
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd)
        wrdw[bI] = st[bI].g * (st[bI].g.transpose() * rd[bI] * st[bI].g) * st[bI].g.transpose();
      else
        wrdwv[bI] = st[bI].wv.array().square().matrix().cwiseProduct(rdv[bI]);
    }
    const Vec awrdw_flat = flatten(wrdw, wrdwv);
    const Vec a_wrdw = aflat * awrdw_flat;

    auto solve_direction = [&](const std::vector<Mat>& rcm, const std::vector<Vec>& rcvv,
                               std::vector<Mat>& odx, std::vector<Vec>& odxv,
                               std::vector<Mat>& ods, std::vector<Vec>& odsv, Vec& ody) {
      const Vec arc = aflat * flatten(rcm, rcvv);
      const Vec h = rp - arc + a_wrdw;
      if (m > 0) {
        ody = schur_llt.solve(h);
        ody += schur_llt.solve(h - schur * ody);  // one refinement pass
      } else {
        ody = Vec(0);
      }
      const Vec atdy = aflat.transpose() * ody;
      for (int bI = 0; bI < nb; ++bI) {
        if (st[bI].kind == BlockKind::Psd) {
          Mat atdyb =
              Eigen::Map<const Mat>(atdy.data() + offset[bI], st[bI].size, st[bI].size);
          ods[bI] = rd[bI] - 0.5 * (atdyb + atdyb.transpose());
          const Mat wdsw = st[bI].g * (st[bI].g.transpose() * ods[bI] * st[bI].g) *
                           st[bI].g.transpose();
          odx[bI] = rcm[bI] - wdsw;
          odx[bI] = 0.5 * (odx[bI] + odx[bI].transpose()).eval();
        } else {
          odsv[bI] = rdv[bI] - atdy.segment(offset[bI], st[bI].size);
          odxv[bI] =
              rcvv[bI] - st[bI].wv.array().square().matrix().cwiseProduct(odsv[bI]);
        }
      }
    };

    // predictor (affine direction): R_c = -X
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd)
        rc[bI] = -st[bI].x;
      else
        rcv[bI] = -st[bI].xv;
    }
    Vec dya;
    solve_direction(rc, rcv, dxa, dxav, dsa, dsav, dya);

    double apmax = kInf, admax = kInf;
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        apmax = std::min(apmax, detail::max_step_psd(st[bI].x, dxa[bI]));
        admax = std::min(admax, detail::max_step_psd(st[bI].s, dsa[bI]));
      } else {
        apmax = std::min(apmax, detail::max_step_vec(st[bI].xv, dxav[bI]));
        admax = std::min(admax, detail::max_step_vec(st[bI].sv, dsav[bI]));
      }
    }
    const double ap_aff = std::min(1.0, apmax);
    const double ad_aff = std::min(1.0, admax);
    double xs_aff = 0.0;
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd)
        xs_aff += ((st[bI].x + ap_aff * dxa[bI]).cwiseProduct(st[bI].s + ad_aff * dsa[bI])).sum();
      else
        xs_aff += (st[bI].xv + ap_aff * dxav[bI]).dot(st[bI].sv + ad_aff * dsav[bI]);
    }
    const double mu_aff = std::max(xs_aff, 0.0) / nu;
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-10, 1.0);

    // corrector in the scaled space: the Lyapunov-symmetrized target with the
    // Mehrotra second-order term
    for (int bI = 0; bI < nb; ++bI) {
      detail::BlockState& s = st[bI];
      if (s.kind == BlockKind::Psd) {
        const Mat dxh = s.ginv * dxa[bI] * s.ginv.transpose();
        const Mat dsh = s.g.transpose() * dsa[bI] * s.g;
        const Mat cross = dxh * dsh;
        Mat rhat = -0.5 * (cross + cross.transpose());
        for (int i = 0; i < s.size; ++i) rhat(i, i) += sigma * mu - s.d(i) * s.d(i);
        Mat u(s.size, s.size);
        for (int i = 0; i < s.size; ++i)
          for (int j = 0; j < s.size; ++j) u(i, j) = 2.0 * rhat(i, j) / (s.d(i) + s.d(j));
        rc[bI] = s.g * u * s.g.transpose();
      } else {
        const Vec cross = dxav[bI].cwiseProduct(dsav[bI]);  // scaling cancels elementwise
        rcv[bI] = s.wv.cwiseProduct(
            (Vec::Constant(s.size, sigma * mu) - s.dv.array().square().matrix() - cross)
                .cwiseQuotient(s.dv));
      }
    }
    Vec dy;
    solve_direction(rc, rcv, dx, dxv, ds, dsv, dy);

    apmax = kInf;
    admax = kInf;
    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        apmax = std::min(apmax, detail::max_step_psd(st[bI].x, dx[bI]));
        admax = std::min(admax, detail::max_step_psd(st[bI].s, ds[bI]));
      } else {
        apmax = std::min(apmax, detail::max_step_vec(st[bI].xv, dxv[bI]));
        admax = std::min(admax, detail::max_step_vec(st[bI].sv, dsv[bI]));
      }
    }
    const double ap = std::min(1.0, opts.step_fraction * apmax);
    const double ad = std::min(1.0, opts.step_fraction * admax);
    if (ap < 1e-10 && ad < 1e-10) {
      if (++stall >= 3) break;
    } else {
      stall = 0;
    }

    for (int bI = 0; bI < nb; ++bI) {
      if (st[bI].kind == BlockKind::Psd) {
        st[bI].x += ap * dx[bI];
        st[bI].s += ad * ds[bI];
        st[bI].x = 0.5 * (st[bI].x + st[bI].x.transpose()).eval();
        st[bI].s = 0.5 * (st[bI].s + st[bI].s.transpose()).eval();
      } else {
        st[bI].xv += ap * dxv[bI];
        st[bI].sv += ad * dsv[bI];
      }
    }
    y += ad * dy;
  }

  return finalize(SolveStatus::MaxIter);
}

inline SdpSolution solve(const SdpProblem& problem, double tol, int max_iter) {
  SolverOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve(problem, opts);
}

}  // namespace rispac::sdp
