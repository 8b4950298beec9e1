#include <catch2/catch_amalgamated.hpp>

#include "rispac/sdp/embed.hpp"
#include "rispac/sdp/json_io.hpp"
#include "rispac/sdp/problem.hpp"
#include "rispac/sdp/randomize.hpp"
#include "rispac/sdp/solver.hpp"

using namespace rispac;
using namespace rispac::sdp;

namespace {

Mat random_symmetric(int n, Rng& rng) {
  Mat s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = gaussian(rng);
  return s;
}

CMat random_hermitian(int n, Rng& rng) {
  CMat h(n, n);
  for (int i = 0; i < n; ++i) {
    h(i, i) = gaussian(rng);
    for (int j = 0; j < i; ++j) {
      h(i, j) = circular_gaussian(rng);
      h(j, i) = std::conj(h(i, j));
    }
  }
  return h;
}

// min lambda subject to lambda I - S >= 0, with lambda split into a
// difference of nonnegative scalars
SdpProblem lambda_max_problem(const Mat& s) {
  const int n = static_cast<int>(s.rows());
  SdpProblem p;
  p.blocks.push_back({BlockKind::Psd, n});
  p.blocks.push_back({BlockKind::NonNeg, 2});
  Mat cl(2, 1);
  cl << 1, -1;
  p.objective.terms.push_back({1, cl});
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Mat e = Mat::Zero(n, n);
      e(i, j) = e(j, i) = (i == j) ? 1.0 : 0.5;
      Constraint c;
      c.expr.terms.push_back({0, e});
      if (i == j) {
        Mat l(2, 1);
        l << -1, 1;
        c.expr.terms.push_back({1, l});
      }
      c.rel = Relation::Eq;
      c.rhs = -s(i, j);
      p.constraints.push_back(std::move(c));
    }
  return p;
}

}  // namespace

TEST_CASE("trace minimization with a pinned corner") {
  SdpProblem p;
  p.blocks.push_back({BlockKind::Psd, 2});
  p.objective.terms.push_back({0, Mat::Identity(2, 2)});
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 1;
  p.constraints.push_back({{{{0, a}}}, Relation::Eq, 1.0});
  const SdpSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK_THAT(s.primal_obj, Catch::Matchers::WithinAbs(1.0, 1e-7));
  Mat expect = Mat::Zero(2, 2);
  expect(0, 0) = 1;
  CHECK((s.x[0] - expect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("linear program as a conic block") {
  SdpProblem p;
  p.blocks.push_back({BlockKind::NonNeg, 1});
  p.objective.terms.push_back({0, Mat::Ones(1, 1)});
  p.constraints.push_back({{{{0, Mat::Ones(1, 1)}}}, Relation::Ge, 3.0});
  const SdpSolution s = solve(p);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK_THAT(s.primal_obj, Catch::Matchers::WithinAbs(3.0, 1e-7));
}

TEST_CASE("largest eigenvalue via a linear matrix inequality") {
  Rng rng(7);
  const Mat s3 = random_symmetric(3, rng);
  const SdpSolution s = solve(lambda_max_problem(s3));
  REQUIRE(s.status == SolveStatus::Optimal);
  const double truth = Eigen::SelfAdjointEigenSolver<Mat>(s3).eigenvalues().maxCoeff();
  CHECK_THAT(s.primal_obj, Catch::Matchers::WithinRel(truth, 1e-6));
}

TEST_CASE("weak duality and gap decrease near convergence") {
  Rng rng(21);
  for (int inst = 0; inst < 5; ++inst) {
    const Mat s4 = random_symmetric(4, rng);
    const SdpSolution s = solve(lambda_max_problem(s4));
    REQUIRE(s.status == SolveStatus::Optimal);
    REQUIRE(s.history.size() >= 6);
    const size_t last = s.history.size() - 1;
    double prev_gap = kInf;
    for (size_t i = last - 4; i <= last; ++i) {
      const double gap = s.history[i].primal_obj - s.history[i].dual_obj;
      REQUIRE(gap >= -1e-9 * (1 + std::abs(s.history[i].primal_obj)));
      REQUIRE(gap <= prev_gap * (1 + 1e-9) + 1e-15);
      prev_gap = gap;
    }
  }
}

TEST_CASE("optimal solutions satisfy the residual contract") {
  Rng rng(31);
  const Mat s5 = random_symmetric(5, rng);
  const SdpSolution s = solve(lambda_max_problem(s5));
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.gap_rel <= 1e-7);
  CHECK(s.res_primal <= 1e-7);
  CHECK(s.res_dual <= 1e-7);
}

TEST_CASE("infeasible and unbounded problems are certified") {
  SECTION("empty feasible set") {
    SdpProblem p;
    p.blocks.push_back({BlockKind::NonNeg, 1});
    p.objective.terms.push_back({0, Mat::Ones(1, 1)});
    p.constraints.push_back({{{{0, Mat::Ones(1, 1)}}}, Relation::Le, -1.0});
    const SdpSolution s = solve(p);
    CHECK(s.status == SolveStatus::Infeasible);
    CHECK(s.certificate_residual < 1e-7);
  }
  SECTION("objective unbounded below") {
    SdpProblem p;
    p.blocks.push_back({BlockKind::NonNeg, 1});
    p.objective.terms.push_back({0, Mat(-Mat::Ones(1, 1))});
    p.constraints.push_back({{{{0, Mat::Ones(1, 1)}}}, Relation::Ge, 1.0});
    const SdpSolution s = solve(p);
    CHECK(s.status == SolveStatus::Unbounded);
  }
  SECTION("iteration cap reports the best iterate") {
    Rng rng(5);
    SolverOptions o;
    o.max_iter = 2;
    const SdpSolution s = solve(lambda_max_problem(random_symmetric(3, rng)), o);
    CHECK(s.status == SolveStatus::MaxIter);
    CHECK(s.iterations <= 2);
  }
}

TEST_CASE("problem validation") {
  SdpProblem p;
  p.blocks.push_back({BlockKind::Psd, 2});
  Mat bad(2, 2);
  bad << 0, 1, 0, 0;  // not symmetric
  p.objective.terms.push_back({0, bad});
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("hermitian embedding") {
  SECTION("identity embeds to identity") {
    CHECK(hermitian_embed(CMat::Identity(3, 3)).isIdentity(1e-15));
  }
  SECTION("spin matrix spectrum doubles") {
    CMat h(2, 2);
    h << 0, Cplx(0, -1), Cplx(0, 1), 0;
    const Mat e = hermitian_embed(h);
    Eigen::SelfAdjointEigenSolver<Mat> eig(e);
    const Vec lam = eig.eigenvalues();
    CHECK_THAT(lam(0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(lam(1), Catch::Matchers::WithinAbs(-1.0, 1e-12));
    CHECK_THAT(lam(2), Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(lam(3), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("random matrices: eigenvalues double, trace doubles, round trip") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const CMat h = random_hermitian(4, rng);
      const Mat e = hermitian_embed(h);
      CHECK_THAT(e.trace(), Catch::Matchers::WithinRel(2 * h.real().trace(), 1e-12));
      const Vec le = Eigen::SelfAdjointEigenSolver<Mat>(e).eigenvalues();
      const Vec lh = Eigen::SelfAdjointEigenSolver<CMat>(h).eigenvalues();
      for (int i = 0; i < 4; ++i) {
        REQUIRE_THAT(le(2 * i), Catch::Matchers::WithinAbs(lh(i), 1e-10));
        REQUIRE_THAT(le(2 * i + 1), Catch::Matchers::WithinAbs(lh(i), 1e-10));
      }
      REQUIRE((hermitian_unembed(e) - h).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("cone isomorphism over 1000 draws") {
    Rng rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
      CMat h = random_hermitian(3, rng);
      if (trial % 2) {  // half the draws made PSD by squaring
        h = (h * h.adjoint()).eval();
        h = (0.5 * (h + h.adjoint())).eval();
      }
      const bool psd_h =
          Eigen::SelfAdjointEigenSolver<CMat>(h).eigenvalues().minCoeff() >= -1e-10;
      const bool psd_e = Eigen::SelfAdjointEigenSolver<Mat>(hermitian_embed(h))
                             .eigenvalues()
                             .minCoeff() >= -1e-10;
      REQUIRE(psd_h == psd_e);
    }
  }
  SECTION("non-hermitian input rejected") {
    CMat h(2, 2);
    h << 1, 2, 3, 1;
    CHECK_THROWS_AS(hermitian_embed(h), InvalidArgument);
  }
}

TEST_CASE("gaussian randomization") {
  SECTION("rank-one input returns the eigenvector without sampling") {
    Rng rng(2);
    CVec v(3);
    for (int i = 0; i < 3; ++i) v(i) = circular_gaussian(rng);
    const CMat x = v * v.adjoint();
    RandomizeReport rep;
    const CVec got = gaussian_randomize(
        x, 50, nullptr,
        [](const CVec&) {
          return Score{0.0, true, 0.0};
        },
        rng, &rep);
    CHECK(rep.rank_one_shortcut);
    CHECK(rep.trials_used == 1);
    // equal up to a global phase
    const Cplx phase = (v.adjoint() * got).value();
    REQUIRE((got - v * (phase / std::abs(phase))).cwiseAbs().maxCoeff() < 1e-8 * v.norm());
  }

  SECTION("mean quadratic form matches the covariance trace") {
    Rng rng(8);
    CMat a = random_hermitian(3, rng);
    a = (a * a.adjoint()).eval();  // PSD scorer weight
    CMat x = random_hermitian(3, rng);
    x = (x * x.adjoint() + 0.2 * CMat::Identity(3, 3)).eval();
    x = (0.5 * (x + x.adjoint())).eval();
    double sum = 0.0;
    long count = 0;
    const int trials = 100000;
    gaussian_randomize(
        x, trials, nullptr,
        [&](const CVec& z) {
          const double q = (z.adjoint() * a * z).value().real();
          sum += q;
          ++count;
          return Score{-q, true, 0.0};
        },
        rng);
    const double expect = (a * x).real().trace();
    CHECK(count == trials);
    CHECK_THAT(sum / count, Catch::Matchers::WithinRel(expect, 0.02));
  }

  SECTION("single infeasible trial raises with the best candidate attached") {
    Rng rng(4);
    CMat x = random_hermitian(3, rng);
    x = (x * x.adjoint() + CMat::Identity(3, 3)).eval();  // rank 3, no shortcut
    try {
      gaussian_randomize(
          x, 1, nullptr,
          [](const CVec&) {
            return Score{0.0, false, 2.5};
          },
          rng);
      FAIL("expected NoFeasibleCandidate");
    } catch (const NoFeasibleCandidate& e) {
      CHECK(e.best_violation == 2.5);
      CHECK(e.best_candidate.size() == 3);
    }
  }
}

TEST_CASE("problem json round trip") {
  Rng rng(11);
  SdpProblem p = lambda_max_problem(random_symmetric(3, rng));
  const auto j = problem_to_json(p);
  const SdpProblem q = problem_from_json(j);
  REQUIRE(q.blocks.size() == p.blocks.size());
  REQUIRE(q.constraints.size() == p.constraints.size());
  const SdpSolution sp = solve(p);
  const SdpSolution sq = solve(q);
  CHECK_THAT(sq.primal_obj, Catch::Matchers::WithinRel(sp.primal_obj, 1e-9));
}
