// Command-line front end: configuration loading with dotted-key overrides,
// the full two-stage pipeline, parameter sweeps, config validation, the FIM
// self check, and a standalone conic-solver entry point.
//
// Exit codes: 0 success, 1 usage or config error, 2 infeasible problem,
// 3 self-check failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rispac/beamforming.hpp"
#include "rispac/config.hpp"
#include "rispac/metrics.hpp"
#include "rispac/scenario.hpp"
#include "rispac/sdp/json_io.hpp"
#include "rispac/sdp/solver.hpp"
#include "rispac/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitSelfCheck = 3;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rispac::InvalidArgument("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw rispac::InvalidArgument(path + ": " + e.what());
  }
  return j;
}

// "a.b.c=value" applied to an existing key of the JSON document; the value
// is parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw rispac::InvalidArgument("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json* node = &doc;
  size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (node->is_array()) {
      const size_t idx = std::stoul(part);
      if (idx >= node->size())
        throw rispac::InvalidArgument("override index out of range: " + key);
      node = &(*node)[idx];
    } else {
      if (!node->contains(part))
        throw rispac::InvalidArgument("override references unknown config key: " + key);
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    *node = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    *node = value;
  }
}

rispac::SystemConfig load_config_with_overrides(const std::string& path,
                                                const std::vector<std::string>& sets,
                                                std::uint64_t* seed_override) {
  nlohmann::json doc = load_json_file(path);
  for (const std::string& s : sets) apply_override(doc, s);
  rispac::SystemConfig cfg = rispac::config_from_json(doc);
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

int cmd_run(const rispac::SystemConfig& cfg, const std::string& out_path) {
  using namespace rispac;
  if (auto issues = cfg.validate(); !issues.empty()) {
    for (const auto& i : issues) std::cerr << "config error: " << i << "\n";
    return kExitConfig;
  }
  try {
    const TwoStageResult res = run_two_stage(cfg);
    std::printf("status: %s\n", res.metrics.solver_status.c_str());
    std::printf("total transmit power: %.6g W (%.2f dBm), sdr bound %.6g W, gap %.2e\n",
                res.metrics.power_total_w, res.metrics.power_total_dbm,
                res.metrics.sdr_bound_power_w, res.metrics.sdr_gap);
    for (size_t k = 0; k < res.metrics.ue.size(); ++k) {
      const UeMetrics& m = res.metrics.ue[k];
      const double dr = cfg.rate_req[k];
      const double dd = cfg.peb_threshold[k];
      std::printf("  ue %zu: rate %.4f bps/Hz (req %.4f, margin %+.2e), peb %.6g m", k + 1,
                  m.rate, dr, m.rate - dr, m.peb);
      if (std::isfinite(dd))
        std::printf(" (thresh %.6g, margin %+.2e)\n", dd, dd - m.peb);
      else
        std::printf(" (unconstrained)\n");
    }
    if (!out_path.empty()) {
      std::ofstream out(out_path);
      if (!out) {
        std::cerr << "cannot write " << out_path << "\n";
        return kExitConfig;
      }
      out << metrics_to_json(res.metrics).dump(2) << "\n";
      std::printf("metrics written to %s\n", out_path.c_str());
    }
    return kExitOk;
  } catch (const InfeasibleConstraints& e) {
    std::cerr << "infeasible (" << to_string(e.family) << " constraints): " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const NoFeasibleCandidate& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const SingularInformation& e) {
    std::cerr << "singular position information: " << e.what() << "\n";
    return kExitInfeasible;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS-aided integrated positioning and communication toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, format = "csv";
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  bool timing = false;
  bool corrupt_delta_f = false;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config_path, "input JSON file");
    if (need_config) opt->required();
    sub->add_option("--set", sets, "override config keys, key=value");
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
          seed = v;
          seed_given = true;
        },
        "seed override");
    return sub;
  };

  auto* run = add_common(app.add_subcommand("run", "solve one configuration"), true);
  run->add_option("--out", out_path, "metrics JSON output path");

  auto* sweep = add_common(app.add_subcommand("sweep", "run a parameter sweep"), true);
  sweep->add_option("--out", out_path, "result table path");
  sweep->add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
  sweep->add_option("--jobs", jobs, "parallel sweep workers");
  sweep->add_flag("--timing", timing, "record wall-clock times (breaks reproducibility)");

  auto* validate = add_common(app.add_subcommand("validate", "check a configuration"), true);

  auto* fim = add_common(
      app.add_subcommand("fim-check", "compare analytic and numerical information matrices"),
      true);
  fim->add_flag("--corrupt-delta-f", corrupt_delta_f,
                "test hook: perturb the analytic path to force a mismatch");

  auto* solve_sdp = app.add_subcommand("solve-sdp", "solve a captured conic problem");
  solve_sdp->add_option("--config", config_path, "problem JSON file")->required();
  solve_sdp->add_option("--out", out_path, "solution summary JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfig : kExitOk;
  }

  try {
    if (run->parsed()) {
      const auto cfg =
          load_config_with_overrides(config_path, sets, seed_given ? &seed : nullptr);
      return cmd_run(cfg, out_path);
    }

    if (validate->parsed()) {
      const auto cfg =
          load_config_with_overrides(config_path, sets, seed_given ? &seed : nullptr);
      const auto issues = cfg.validate();
      if (issues.empty()) {
        std::printf("ok: %d ue(s), %d tx antennas, %d ris elements, %d subcarriers\n",
                    cfg.n_ues(), cfg.n_tx(), cfg.n_ris(), cfg.n_subcarriers);
        return kExitOk;
      }
      for (const auto& i : issues) std::cerr << "invalid: " << i << "\n";
      return kExitConfig;
    }

    if (sweep->parsed()) {
      nlohmann::json doc = load_json_file(config_path);
      for (const std::string& s : sets) apply_override(doc, s);
      rispac::SweepSpec spec = rispac::sweep_spec_from_json(doc);
      if (seed_given) spec.seeds = {seed};
      const rispac::SweepTable table = rispac::run_sweep(spec, jobs);
      const std::string path =
          out_path.empty() ? rispac::default_sweep_filename(spec, format) : out_path;
      rispac::emit(table, format, path, timing);
      std::printf("%zu rows written to %s\n", table.rows.size(), path.c_str());
      return kExitOk;
    }

    if (fim->parsed()) {
      const auto cfg =
          load_config_with_overrides(config_path, sets, seed_given ? &seed : nullptr);
      if (auto issues = cfg.validate(); !issues.empty()) {
        for (const auto& i : issues) std::cerr << "config error: " << i << "\n";
        return kExitConfig;
      }
      const auto res = rispac::fim_selfcheck(cfg, 20, corrupt_delta_f);
      std::printf("max relative error over %d instances: %.3e (%s)\n", res.instances,
                  res.max_rel_error, res.pass ? "pass" : "FAIL");
      return res.pass ? kExitOk : kExitSelfCheck;
    }

    if (solve_sdp->parsed()) {
      const rispac::sdp::SdpProblem prob = rispac::sdp::load_problem(config_path);
      const rispac::sdp::SdpSolution sol = rispac::sdp::solve(prob);
      std::printf("status: %s\n", to_string(sol.status));
      std::printf("primal %.12g, dual %.12g, gap %.3e, iterations %d\n", sol.primal_obj,
                  sol.dual_obj, sol.gap_rel, sol.iterations);
      if (!out_path.empty()) {
        nlohmann::ordered_json j;
        j["status"] = to_string(sol.status);
        j["primal_obj"] = sol.primal_obj;
        j["dual_obj"] = sol.dual_obj;
        j["gap_rel"] = sol.gap_rel;
        j["iterations"] = sol.iterations;
        std::ofstream out(out_path);
        out << j.dump(2) << "\n";
      }
      if (sol.status == rispac::sdp::SolveStatus::Optimal) return kExitOk;
      if (sol.status == rispac::sdp::SolveStatus::Infeasible ||
          sol.status == rispac::sdp::SolveStatus::Unbounded)
        return kExitInfeasible;
      return kExitConfig;
    }
  } catch (const rispac::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
