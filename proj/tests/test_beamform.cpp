#include <catch2/catch_amalgamated.hpp>

#include "rispac/beamforming.hpp"
#include "rispac/scenario.hpp"

using namespace rispac;

namespace {

// RIS rows x 1 column so tiny element counts stay valid grids
SystemConfig search_config(int m_ris, int n_tx_rows, int n_sc, int n_ue, std::uint64_t seed) {
  SystemConfig cfg = build_scenario(1, true);
  const double s = cfg.ris.element_spacing;
  cfg.ris = upa_coordinates(m_ris, 1, s);
  cfg.ris.reference_point = Vec3(20, 0, 10);
  cfg.bs = upa_coordinates(n_tx_rows, 1, s);
  cfg.bs.reference_point = Vec3(0, 0, 10);
  cfg.n_subcarriers = n_sc;
  cfg.seed = seed;
  cfg.ue_positions.resize(n_ue);
  cfg.obstruction.assign(n_ue, 1);
  cfg.rate_req.assign(n_ue, 1.0);
  cfg.peb_threshold.assign(n_ue, kInf);
  return cfg;
}

void check_phase_invariants(const PhaseProfile& p, int m) {
  REQUIRE(p.v.size() == m);
  const double mag = 1.0 / std::sqrt(static_cast<double>(m));
  for (int i = 0; i < m; ++i) REQUIRE(std::abs(std::abs(p.v(i)) - mag) < 1e-12);
  if (p.mode == PhaseMode::Discrete) {
    REQUIRE(static_cast<int>(p.levels.size()) == m);
    for (int i = 0; i < m; ++i) {
      const double want = 2 * kPi * p.levels[i] / p.n_levels;
      const Cplx expect = std::polar(mag, want);
      REQUIRE(std::abs(p.v(i) - expect) < 1e-9);
    }
  }
}

double brute_force_best(const ChannelSet& ch, const std::vector<double>& beta, int levels) {
  const int m = ch.n_ris;
  const double mag = 1.0 / std::sqrt(static_cast<double>(m));
  long combos = 1;
  for (int i = 0; i < m; ++i) combos *= levels;
  double best = -kInf;
  for (long c = 0; c < combos; ++c) {
    long rem = c;
    CVec v(m);
    for (int i = 0; i < m; ++i) {
      v(i) = std::polar(mag, 2 * kPi * (rem % levels) / levels);
      rem /= levels;
    }
    best = std::max(best, stage1_objective_value(ch, beta, v));
  }
  return best;
}

}  // namespace

TEST_CASE("composite matrices") {
  const SystemConfig cfg = search_config(4, 2, 2, 2, 3);
  const ChannelSet ch = assemble_channels(cfg);

  SECTION("identity: v^T C equals the reflected row") {
    Rng rng(5);
    const PhaseProfile p = random_phase_profile(ch.n_ris, rng);
    for (int n = 1; n <= ch.n_subcarriers; ++n)
      for (int k = 0; k < ch.n_ues; ++k) {
        const auto [c, a] = composite_matrices(ch, k, n);
        const Eigen::RowVectorXcd via_c = p.v.transpose() * c;
        const Eigen::RowVectorXcd direct = ch.ris_row(n, k, p.v);
        REQUIRE((via_c - direct).cwiseAbs().maxCoeff() <
                1e-12 * std::max(1e-300, direct.cwiseAbs().maxCoeff()));
        // a is Hermitian PSD
        REQUIRE((a - a.adjoint()).cwiseAbs().maxCoeff() < 1e-15 * a.cwiseAbs().maxCoeff());
        REQUIRE(Eigen::SelfAdjointEigenSolver<CMat>(a).eigenvalues().minCoeff() >
                -1e-12 * a.cwiseAbs().maxCoeff());
      }
  }

  SECTION("zero reflected channel gives zero matrices") {
    ChannelSet z = ch;
    for (auto& per_n : z.legs[0].ris_ue)
      for (auto& h : per_n) h.setZero();
    const auto [c, a] = composite_matrices(z, 0, 1);
    CHECK(c.cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("single-element surface gives a nonnegative scalar kernel") {
    const SystemConfig one = search_config(1, 2, 1, 1, 4);
    const ChannelSet cho = assemble_channels(one);
    const auto [c, a] = composite_matrices(cho, 0, 1);
    REQUIRE(a.rows() == 1);
    CHECK(a(0, 0).real() >= 0.0);
    CHECK(std::abs(a(0, 0).imag()) < 1e-18);
  }
}

TEST_CASE("discrete phase search") {
  SECTION("single element matches exhaustive maximization") {
    const SystemConfig cfg = search_config(1, 2, 2, 2, 7);
    const ChannelSet ch = assemble_channels(cfg);
    const auto beta = rate_weights(cfg);
    Rng rng(1);
    const Stage1Result res = stage1_discrete(ch, beta, 4, 3, rng);
    check_phase_invariants(res.profile, 1);
    CHECK_THAT(res.objective, Catch::Matchers::WithinRel(brute_force_best(ch, beta, 4), 1e-12));
  }

  SECTION("objective never decreases along coordinate updates") {
    const SystemConfig cfg = search_config(6, 2, 2, 2, 11);
    const ChannelSet ch = assemble_channels(cfg);
    const auto beta = rate_weights(cfg);
    Rng rng(2);
    const Stage1Result res = stage1_discrete(ch, beta, 4, 5, rng);
    REQUIRE_FALSE(res.objective_traces.empty());
    for (const auto& trace : res.objective_traces)
      for (size_t i = 1; i < trace.size(); ++i)
        REQUIRE(trace[i] >= trace[i - 1] * (1 - 1e-12) - 1e-300);
  }

  SECTION("multi-start matches brute force on 3-element 2-level instances") {
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
      const SystemConfig cfg = search_config(3, 2, 2, 2, seed);
      const ChannelSet ch = assemble_channels(cfg);
      const auto beta = rate_weights(cfg);
      Rng rng(seed);
      const Stage1Result res = stage1_discrete(ch, beta, 2, 8, rng);
      check_phase_invariants(res.profile, 3);
      const double best = brute_force_best(ch, beta, 2);
      if (res.objective >= best * (1 - 1e-9)) ++hits;
    }
    CHECK(hits >= 24);
  }
}

TEST_CASE("continuous phase relaxation") {
  SECTION("single element is exact") {
    const SystemConfig cfg = search_config(1, 2, 2, 2, 5);
    const ChannelSet ch = assemble_channels(cfg);
    const auto beta = rate_weights(cfg);
    Rng rng(3);
    const Stage1Result res = stage1_continuous(ch, beta, 16, rng);
    check_phase_invariants(res.profile, 1);
    CHECK_THAT(res.objective, Catch::Matchers::WithinRel(res.sdr_bound, 1e-6));
  }

  SECTION("relaxation bounds every unit-modulus profile") {
    const SystemConfig cfg = search_config(5, 2, 2, 2, 6);
    const ChannelSet ch = assemble_channels(cfg);
    const auto beta = rate_weights(cfg);
    Rng rng(4);
    const Stage1Result res = stage1_continuous(ch, beta, 64, rng);
    check_phase_invariants(res.profile, 5);
    CHECK(res.sdr_bound >= res.objective * (1 - 1e-9));
    for (int draw = 0; draw < 100; ++draw) {
      const PhaseProfile p = random_phase_profile(5, rng);
      REQUIRE(res.sdr_bound >=
              stage1_objective_value(ch, beta, p.v) * (1 - 1e-9));
    }
  }

  SECTION("achieved value reaches a fine discrete grid") {
    const SystemConfig cfg = search_config(4, 2, 2, 2, 9);
    const ChannelSet ch = assemble_channels(cfg);
    const auto beta = rate_weights(cfg);
    Rng rng(5);
    const Stage1Result res = stage1_continuous(ch, beta, 256, rng);
    Rng rng2(6);
    const Stage1Result fine = stage1_discrete(ch, beta, 64, 8, rng2);
    CHECK(res.objective >= fine.objective * 0.99);
  }
}

TEST_CASE("stage two beamforming") {
  SECTION("no binding constraints yields zero power") {
    SystemConfig cfg = search_config(4, 2, 2, 2, 8);
    cfg.rate_req.assign(2, 0.0);
    cfg.peb_threshold.assign(2, kInf);
    const ChannelSet ch = assemble_channels(cfg);
    Rng rng(7);
    const BeamSolution sol = stage2_beamforming(ch, identity_phase_profile(ch.n_ris), cfg, rng);
    CHECK(sol.power_w == 0.0);
    CHECK(total_power(sol.w) == 0.0);
  }

  SECTION("single-user single-carrier rate matches matched-filter power") {
    SystemConfig cfg = search_config(4, 2, 1, 1, 10);
    cfg.rate_req = {2.5};
    cfg.peb_threshold = {kInf};
    const ChannelSet ch = assemble_channels(cfg);
    const PhaseProfile phase = identity_phase_profile(ch.n_ris);
    Rng rng(9);
    const BeamSolution sol = stage2_beamforming(ch, phase, cfg, rng);
    const double beta = std::exp2(2.5) - 1.0;
    const CVec g = ch.effective_channel(1, 0, 1, phase.v);
    const double expect = beta * cfg.noise_variance() / g.squaredNorm();
    CHECK_THAT(sol.power_w, Catch::Matchers::WithinRel(expect, 1e-4));
    // and the beam is aligned with the effective channel
    const double align = std::abs((g.adjoint() * sol.w[0][0]).value()) /
                         (g.norm() * sol.w[0][0].norm());
    CHECK_THAT(align, Catch::Matchers::WithinAbs(1.0, 1e-5));
  }

  SECTION("returned beams pass an independent feasibility recheck") {
    SystemConfig cfg = build_scenario(2, true);
    cfg.n_subcarriers = 4;
    cfg.seed = 77;
    cfg.rate_req.assign(3, 0.8);
    cfg.peb_threshold = {300.0, kInf, 300.0};  // the blocked UE has one anchor
    const TwoStageResult res = run_two_stage(cfg);
    for (int k = 0; k < 3; ++k) {
      REQUIRE(res.metrics.ue[k].rate >= cfg.rate_req[k] - 1e-3);
      REQUIRE(res.metrics.ue[k].peb <= cfg.peb_threshold[k] * (1 + 1e-3));
    }
    CHECK(res.beams.power_w >= res.beams.sdr_bound_w * (1 - 1e-6));
  }

  SECTION("impossible rate requirement names the rate family") {
    SystemConfig cfg = search_config(4, 2, 2, 2, 12);
    cfg.ue_positions[1] = cfg.ue_positions[0];  // identical channels
    cfg.rate_req.assign(2, 12.0);               // beyond the interference limit
    cfg.peb_threshold.assign(2, kInf);
    const ChannelSet ch = assemble_channels(cfg);
    Rng rng(11);
    try {
      stage2_beamforming(ch, identity_phase_profile(ch.n_ris), cfg, rng);
      FAIL("expected InfeasibleConstraints");
    } catch (const InfeasibleConstraints& e) {
      CHECK(e.family == ConstraintFamily::Rate);
    }
  }

  SECTION("all-blocked single surface names the peb family") {
    SystemConfig cfg = build_scenario(3, true);
    cfg.ris_partitions = 1;  // single anchor: position not identifiable
    cfg.n_subcarriers = 2;
    const ChannelSet ch = assemble_channels(cfg);
    Rng rng(13);
    try {
      stage2_beamforming(ch, identity_phase_profile(ch.n_ris), cfg, rng);
      FAIL("expected InfeasibleConstraints");
    } catch (const InfeasibleConstraints& e) {
      CHECK(e.family == ConstraintFamily::Peb);
      REQUIRE_FALSE(e.ue_indices.empty());
    }
  }
}

TEST_CASE("two-stage pipeline determinism") {
  SystemConfig cfg = build_scenario(1, true);
  cfg.n_subcarriers = 4;
  cfg.seed = 2024;
  cfg.peb_threshold.assign(3, 60.0);
  for (PhaseMode mode :
       {PhaseMode::Random, PhaseMode::Continuous, PhaseMode::Discrete, PhaseMode::Identity}) {
    cfg.phase_mode = mode;
    const TwoStageResult a = run_two_stage(cfg);
    const TwoStageResult b = run_two_stage(cfg);
    REQUIRE(metrics_csv_row(a.metrics) == metrics_csv_row(b.metrics));
    REQUIRE(a.phase.v == b.phase.v);
    for (int idx = 0; idx < cfg.n_subcarriers; ++idx)
      for (int k = 0; k < 3; ++k) REQUIRE(a.beams.w[idx][k] == b.beams.w[idx][k]);
    check_phase_invariants(a.phase, cfg.n_ris());
  }
}
