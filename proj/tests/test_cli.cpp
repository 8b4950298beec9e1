#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "rispac/config.hpp"
#include "rispac/scenario.hpp"
#include "rispac/sdp/json_io.hpp"

using namespace rispac;

namespace {

int run_cli(const std::string& args, const std::string& log = "cli_out.txt") {
  const std::string cmd = std::string(RISPAC_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SystemConfig quick_desk_config() {
  SystemConfig cfg = build_scenario(1, true);
  cfg.n_subcarriers = 4;
  cfg.peb_threshold.assign(3, 60.0);
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("run subcommand") {
  const std::string cfg_path = "cli_run_cfg.json";
  save_config(quick_desk_config(), cfg_path);

  SECTION("happy path writes metrics and exits 0") {
    REQUIRE(run_cli("run --config " + cfg_path + " --out cli_metrics.json") == 0);
    std::ifstream in("cli_metrics.json");
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    CHECK(j.contains("power_total_w"));
    CHECK(j["ue"].size() == 3);
    CHECK(j["solver_status"] == "optimal");
    std::remove("cli_metrics.json");
  }

  SECTION("missing config file exits 1") {
    CHECK(run_cli("run --config does_not_exist.json") == 1);
  }

  SECTION("unattainable positioning exits 2 naming the family") {
    SystemConfig cfg = build_scenario(3, true);
    cfg.ris_partitions = 1;
    cfg.n_subcarriers = 2;
    cfg.peb_threshold.assign(3, 1e-9);
    save_config(cfg, "cli_infeas.json");
    CHECK(run_cli("run --config cli_infeas.json") == 2);
    const std::string log = slurp("cli_out.txt");
    CHECK(log.find("peb") != std::string::npos);
    std::remove("cli_infeas.json");
  }

  SECTION("seed determinism through the cli") {
    REQUIRE(run_cli("run --config " + cfg_path + " --seed 7 --out cli_m1.json") == 0);
    REQUIRE(run_cli("run --config " + cfg_path + " --seed 7 --out cli_m2.json") == 0);
    CHECK(slurp("cli_m1.json") == slurp("cli_m2.json"));
    REQUIRE(run_cli("run --config " + cfg_path + " --seed 8 --out cli_m3.json") == 0);
    CHECK(slurp("cli_m1.json") != slurp("cli_m3.json"));
    std::remove("cli_m1.json");
    std::remove("cli_m2.json");
    std::remove("cli_m3.json");
  }

  SECTION("dotted overrides reference existing keys") {
    REQUIRE(run_cli("run --config " + cfg_path + " --set n_subcarriers=2") == 0);
    CHECK(run_cli("run --config " + cfg_path + " --set not_a_key=1") == 1);
  }

  std::remove(cfg_path.c_str());
}

TEST_CASE("validate subcommand") {
  SECTION("paper-scale table accepted") {
    save_config(build_scenario(1, false), "cli_paper.json");
    CHECK(run_cli("validate --config cli_paper.json") == 0);
    std::remove("cli_paper.json");
  }
  SECTION("obstruction length mismatch rejected with the field named") {
    auto j = config_to_json(quick_desk_config());
    j["obstruction"] = {1, 1};
    std::ofstream("cli_bad.json") << j.dump(2);
    CHECK(run_cli("validate --config cli_bad.json") == 1);
    CHECK(slurp("cli_out.txt").find("obstruction") != std::string::npos);
    std::remove("cli_bad.json");
  }
  SECTION("discrete mode with q = 0 rejected") {
    auto j = config_to_json(quick_desk_config());
    j["phase_mode"] = "discrete";
    j["q_bits"] = 0;
    std::ofstream("cli_q0.json") << j.dump(2);
    CHECK(run_cli("validate --config cli_q0.json") == 1);
    std::remove("cli_q0.json");
  }
}

TEST_CASE("fim-check subcommand") {
  save_config(quick_desk_config(), "cli_fim.json");
  SECTION("default desk config passes") {
    CHECK(run_cli("fim-check --config cli_fim.json") == 0);
    CHECK(slurp("cli_out.txt").find("pass") != std::string::npos);
  }
  SECTION("corrupted spacing fails with exit 3") {
    CHECK(run_cli("fim-check --config cli_fim.json --corrupt-delta-f") == 3);
  }
  SECTION("single-subcarrier config still runs") {
    SystemConfig cfg = quick_desk_config();
    cfg.n_subcarriers = 1;
    save_config(cfg, "cli_fim1.json");
    CHECK(run_cli("fim-check --config cli_fim1.json") == 0);
    std::remove("cli_fim1.json");
  }
  std::remove("cli_fim.json");
}

TEST_CASE("sweep subcommand produces deterministic csv") {
  nlohmann::json spec = {{"scenario_id", 1},
                         {"desk_scale", true},
                         {"swept_param", "rate_req"},
                         {"values", {0.5, 1.0}},
                         {"fixed_other", 60.0},
                         {"phase_modes", {"random"}},
                         {"seeds", {1, 2}}};
  std::ofstream("cli_sweep.json") << spec.dump(2);
  REQUIRE(run_cli("sweep --config cli_sweep.json --out cli_sweep1.csv") == 0);
  REQUIRE(run_cli("sweep --config cli_sweep.json --out cli_sweep2.csv --jobs 2") == 0);
  const std::string a = slurp("cli_sweep1.csv");
  CHECK(a == slurp("cli_sweep2.csv"));
  CHECK(a.rfind("scenario_id,", 0) == 0);
  CHECK(std::count(a.begin(), a.end(), '\n') == 5);  // header + 4 rows
  std::remove("cli_sweep.json");
  std::remove("cli_sweep1.csv");
  std::remove("cli_sweep2.csv");
}

TEST_CASE("solve-sdp subcommand") {
  sdp::SdpProblem p;
  p.blocks.push_back({sdp::BlockKind::Psd, 2});
  p.objective.terms.push_back({0, Mat::Identity(2, 2)});
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = 1;
  p.constraints.push_back({{{{0, a}}}, sdp::Relation::Eq, 2.0});
  sdp::save_problem(p, "cli_prob.json");
  REQUIRE(run_cli("solve-sdp --config cli_prob.json --out cli_sol.json") == 0);
  std::ifstream in("cli_sol.json");
  nlohmann::json j;
  in >> j;
  CHECK(j["status"] == "optimal");
  CHECK_THAT(j["primal_obj"].get<double>(), Catch::Matchers::WithinAbs(2.0, 1e-6));

  SECTION("infeasible problems exit 2") {
    sdp::SdpProblem q;
    q.blocks.push_back({sdp::BlockKind::NonNeg, 1});
    q.objective.terms.push_back({0, Mat::Ones(1, 1)});
    q.constraints.push_back({{{{0, Mat::Ones(1, 1)}}}, sdp::Relation::Le, -1.0});
    sdp::save_problem(q, "cli_prob2.json");
    CHECK(run_cli("solve-sdp --config cli_prob2.json") == 2);
    std::remove("cli_prob2.json");
  }
  std::remove("cli_prob.json");
  std::remove("cli_sol.json");
}
