#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rispac/beamforming.hpp"
#include "rispac/channel.hpp"
#include "rispac/common.hpp"
#include "rispac/config.hpp"

namespace rispac {

/// The three obstruction scenarios: 1 keeps every direct link, 2 blocks the
/// second UE, 3 blocks all of them and splits the RIS into three sub-arrays
/// so the reflected paths alone can pin down positions. Desk scale keeps the
/// geometry and shrinks the arrays and subcarrier count.
inline SystemConfig build_scenario(int id, bool desk_scale = true) {
  if (id < 1 || id > 3) throw InvalidArgument("build_scenario: id must be 1, 2, or 3");
  SystemConfig cfg;
  cfg.scenario_id = id;
  cfg.fc = 30e9;
  cfg.delta_f = 120e3;
  const double half_lambda = 0.5 * kSpeedOfLight / cfg.fc;

  int bs_rows = 4, bs_cols = 4, ris_rows = 12, ris_cols = 12;
  cfg.n_subcarriers = 1000;
  if (desk_scale) {
    bs_rows = bs_cols = 2;
    ris_rows = 4;
    ris_cols = 4;
    if (id == 3) {
      ris_rows = 6;  // row count must split into the three sub-arrays
      ris_cols = 3;
    }
    cfg.n_subcarriers = 8;
  }
  cfg.bs = upa_coordinates(bs_rows, bs_cols, half_lambda);
  cfg.bs.reference_point = Vec3(0, 0, 10);
  cfg.ris = upa_coordinates(ris_rows, ris_cols, half_lambda);
  cfg.ris.reference_point = Vec3(20, 0, 10);
  cfg.ue_positions = {Vec3(5, 32, 1.5), Vec3(8, 36, 1.5), Vec3(11, 34, 1.5)};

  // Positioning thresholds scale with the information the waveform carries
  // (bandwidth squared), so the desk defaults are far looser than the
  // full-scale ones. A blocked UE sees a single anchor and its position is
  // not identifiable in 2-D, so scenario 2 leaves the blocked UE's PEB
  // unconstrained.
  switch (id) {
    case 1:
      cfg.obstruction = {1, 1, 1};
      cfg.rate_req.assign(3, 1.0);
      cfg.peb_threshold.assign(3, desk_scale ? 200.0 : 0.01);
      break;
    case 2:
      cfg.obstruction = {1, 0, 1};
      cfg.rate_req.assign(3, 1.0);
      cfg.peb_threshold = {desk_scale ? 200.0 : 0.1, kInf, desk_scale ? 200.0 : 0.1};
      break;
    default:
      cfg.obstruction = {0, 0, 0};
      cfg.rate_req.assign(3, 0.1);
      cfg.peb_threshold.assign(3, desk_scale ? 5.0 : 1.0);
      cfg.ris_partitions = 3;
      break;
  }
  return cfg;
}

/// Marks the RIS as `parts` contiguous row blocks, each acting as its own
/// anchor with its own reference point downstream (channel assembly, phase
/// search weighting, and the positioning information all follow the
/// partition). parts = 1 restores the whole-surface behavior.
inline SystemConfig partition_ris(const SystemConfig& cfg, int parts) {
  if (parts < 1) throw InvalidArgument("partition_ris: parts must be >= 1");
  if (cfg.ris.rows % parts != 0)
    throw InvalidArgument("partition_ris: RIS rows (" + std::to_string(cfg.ris.rows) +
                          ") not divisible into " + std::to_string(parts) + " sub-arrays");
  SystemConfig out = cfg;
  out.ris_partitions = parts;
  return out;
}

enum class SweptParam { RateReq, PebThreshold };

struct PhaseModeSpec {
  PhaseMode mode = PhaseMode::Continuous;
  int q_bits = 2;  // discrete mode only
};

inline PhaseModeSpec phase_mode_spec_from_string(const std::string& s) {
  PhaseModeSpec spec;
  if (const auto colon = s.find(':'); colon != std::string::npos) {
    spec.mode = phase_mode_from_string(s.substr(0, colon));
    spec.q_bits = std::stoi(s.substr(colon + 1));
  } else {
    spec.mode = phase_mode_from_string(s);
  }
  return spec;
}

inline std::string to_string(const PhaseModeSpec& spec) {
  std::string s = to_string(spec.mode);
  if (spec.mode == PhaseMode::Discrete) s += ":" + std::to_string(spec.q_bits);
  return s;
}

struct SweepSpec {
  int scenario_id = 1;
  bool desk_scale = true;
  SweptParam swept = SweptParam::RateReq;
  std::vector<double> values;  // strictly ascending
  double fixed_other = 0.0;    // the non-swept constraint level, all UEs
  std::vector<PhaseModeSpec> phase_modes;
  std::vector<std::uint64_t> seeds;

  void validate() const {
    if (values.empty() || phase_modes.empty() || seeds.empty())
      throw InvalidArgument("sweep spec: values, phase_modes, and seeds must be non-empty");
    for (size_t i = 1; i < values.size(); ++i)
      if (!(values[i] > values[i - 1]))
        throw InvalidArgument("sweep spec: values must be strictly ascending");
  }
};

struct SweepRow {
  int scenario_id = 0;
  std::string phase_mode;
  int q_bits = 0;
  std::uint64_t seed = 0;
  double rate_req = 0.0;
  double peb_threshold = 0.0;
  double power_dbm = std::numeric_limits<double>::quiet_NaN();
  double power_w = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> rates;
  std::vector<double> pebs;
  double sdr_gap = std::numeric_limits<double>::quiet_NaN();
  std::string solver_status;
  double wall_ms = 0.0;
};

struct SweepTable {
  int n_ues = 0;
  std::vector<SweepRow> rows;
};

inline SystemConfig sweep_point_config(const SweepSpec& spec, const PhaseModeSpec& mode,
                                       double value, std::uint64_t seed) {
  SystemConfig cfg = build_scenario(spec.scenario_id, spec.desk_scale);
  const int k = cfg.n_ues();
  if (spec.swept == SweptParam::RateReq) {
    cfg.rate_req.assign(k, value);
    cfg.peb_threshold.assign(k, spec.fixed_other);
  } else {
    cfg.peb_threshold.assign(k, value);
    cfg.rate_req.assign(k, spec.fixed_other);
  }
  cfg.phase_mode = mode.mode;
  cfg.q_bits = mode.q_bits;
  cfg.seed = seed;
  return cfg;
}

/// Runs one pipeline per (mode, value, seed) and collects plot-ready rows.
/// Failed points become status rows rather than aborting the sweep.
inline SweepTable run_sweep(const SweepSpec& spec, int jobs = 1) {
  spec.validate();
  SweepTable table;
  table.n_ues = build_scenario(spec.scenario_id, spec.desk_scale).n_ues();

  struct Point {
    PhaseModeSpec mode;
    double value;
    std::uint64_t seed;
  };
  std::vector<Point> points;
  for (const PhaseModeSpec& mode : spec.phase_modes)
    for (double value : spec.values)
      for (std::uint64_t seed : spec.seeds) points.push_back({mode, value, seed});
  table.rows.resize(points.size());

  auto run_point = [&](size_t i) {
    const Point& pt = points[i];
    const SystemConfig cfg = sweep_point_config(spec, pt.mode, pt.value, pt.seed);
    SweepRow& row = table.rows[i];
    row.scenario_id = spec.scenario_id;
    row.phase_mode = to_string(pt.mode.mode);
    row.q_bits = pt.mode.mode == PhaseMode::Discrete ? pt.mode.q_bits : 0;
    row.seed = pt.seed;
    row.rate_req = cfg.rate_req.front();
    row.peb_threshold = cfg.peb_threshold.front();
    const auto start = std::chrono::steady_clock::now();
    try {
      const TwoStageResult res = run_two_stage(cfg);
      row.power_w = res.metrics.power_total_w;
      row.power_dbm = res.metrics.power_total_dbm;
      for (const UeMetrics& m : res.metrics.ue) {
        row.rates.push_back(m.rate);
        row.pebs.push_back(m.peb);
      }
      row.sdr_gap = res.metrics.sdr_gap;
      row.solver_status = res.metrics.solver_status;
    } catch (const InfeasibleConstraints& e) {
      row.solver_status = std::string("infeasible:") + to_string(e.family);
    } catch (const NoFeasibleCandidate&) {
      row.solver_status = "no_feasible_candidate";
    } catch (const SingularInformation&) {
      row.solver_status = "singular_information";
    } catch (const std::exception&) {
      row.solver_status = "error";
    }
    row.rates.resize(table.n_ues, std::numeric_limits<double>::quiet_NaN());
    row.pebs.resize(table.n_ues, std::numeric_limits<double>::quiet_NaN());
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  };

  jobs = std::max(1, jobs);
  if (jobs == 1) {
    for (size_t i = 0; i < points.size(); ++i) run_point(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1))
          run_point(i);
      });
    for (auto& th : pool) th.join();
  }
  return table;
}

namespace detail {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string sweep_csv_header(int n_ues) {
  std::string h =
      "scenario_id,phase_mode,q_bits,seed,rate_req_bpshz,peb_threshold_m,power_total_dbm,"
      "power_total_w";
  for (int k = 1; k <= n_ues; ++k) h += ",rate_k" + std::to_string(k) + "_bpshz";
  for (int k = 1; k <= n_ues; ++k) h += ",peb_k" + std::to_string(k) + "_m";
  h += ",sdr_gap,solver_status,wall_ms";
  return h;
}

/// Timings are volatile, so wall_ms is written as 0 unless explicitly
/// requested; everything else in a sweep is deterministic per seed.
inline void emit(const SweepTable& table, const std::string& format, const std::string& path,
                 bool include_timing = false) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit: cannot write " + path);
  using detail::csv_num;
  if (format == "csv") {
    out << sweep_csv_header(table.n_ues) << "\n";
    for (const SweepRow& r : table.rows) {
      out << r.scenario_id << ',' << r.phase_mode << ',' << r.q_bits << ',' << r.seed << ','
          << csv_num(r.rate_req) << ',' << csv_num(r.peb_threshold) << ','
          << csv_num(r.power_dbm) << ',' << csv_num(r.power_w);
      for (double v : r.rates) out << ',' << csv_num(v);
      for (double v : r.pebs) out << ',' << csv_num(v);
      out << ',' << csv_num(r.sdr_gap) << ',' << r.solver_status << ','
          << csv_num(include_timing ? r.wall_ms : 0.0) << "\n";
    }
  } else if (format == "json") {
    nlohmann::ordered_json j;
    j["n_ues"] = table.n_ues;
    auto rows = nlohmann::ordered_json::array();
    for (const SweepRow& r : table.rows) {
      nlohmann::ordered_json row;
      row["scenario_id"] = r.scenario_id;
      row["phase_mode"] = r.phase_mode;
      row["q_bits"] = r.q_bits;
      row["seed"] = r.seed;
      row["rate_req_bpshz"] = r.rate_req;
      row["peb_threshold_m"] = r.peb_threshold;
      row["power_total_dbm"] = r.power_dbm;
      row["power_total_w"] = r.power_w;
      row["rate_bpshz"] = r.rates;
      row["peb_m"] = r.pebs;
      row["sdr_gap"] = r.sdr_gap;
      row["solver_status"] = r.solver_status;
      row["wall_ms"] = include_timing ? r.wall_ms : 0.0;
      rows.push_back(std::move(row));
    }
    j["rows"] = rows;
    out << j.dump(2) << "\n";
  } else {
    throw InvalidArgument("emit: format must be csv or json");
  }
  if (!out.good()) throw std::runtime_error("emit: write failed for " + path);
}

inline SweepTable sweep_table_from_json(const nlohmann::json& j) {
  SweepTable t;
  t.n_ues = j.at("n_ues").get<int>();
  for (const auto& row : j.at("rows")) {
    SweepRow r;
    r.scenario_id = row.at("scenario_id").get<int>();
    r.phase_mode = row.at("phase_mode").get<std::string>();
    r.q_bits = row.at("q_bits").get<int>();
    r.seed = row.at("seed").get<std::uint64_t>();
    r.rate_req = row.at("rate_req_bpshz").get<double>();
    r.peb_threshold = row.at("peb_threshold_m").get<double>();
    r.power_dbm = row.at("power_total_dbm").get<double>();
    r.power_w = row.at("power_total_w").get<double>();
    r.rates = row.at("rate_bpshz").get<std::vector<double>>();
    r.pebs = row.at("peb_m").get<std::vector<double>>();
    r.sdr_gap = row.at("sdr_gap").get<double>();
    r.solver_status = row.at("solver_status").get<std::string>();
    r.wall_ms = row.at("wall_ms").get<double>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline std::string default_sweep_filename(const SweepSpec& spec, const std::string& format) {
  std::string modes;
  for (size_t i = 0; i < spec.phase_modes.size(); ++i) {
    if (i) modes += "-";
    modes += to_string(spec.phase_modes[i].mode);
    if (spec.phase_modes[i].mode == PhaseMode::Discrete)
      modes += "q" + std::to_string(spec.phase_modes[i].q_bits);
  }
  const std::string param = spec.swept == SweptParam::RateReq ? "rate_req" : "peb_threshold";
  return "s" + std::to_string(spec.scenario_id) + "_" + param + "_" + modes + "." + format;
}

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  SweepSpec spec;
  spec.scenario_id = j.at("scenario_id").get<int>();
  spec.desk_scale = j.value("desk_scale", true);
  const std::string param = j.at("swept_param").get<std::string>();
  if (param == "rate_req")
    spec.swept = SweptParam::RateReq;
  else if (param == "peb_threshold")
    spec.swept = SweptParam::PebThreshold;
  else
    throw InvalidArgument("sweep spec: swept_param must be rate_req or peb_threshold");
  spec.values = j.at("values").get<std::vector<double>>();
  spec.fixed_other = j.at("fixed_other").get<double>();
  for (const auto& m : j.at("phase_modes"))
    spec.phase_modes.push_back(phase_mode_spec_from_string(m.get<std::string>()));
  spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  spec.validate();
  return spec;
}

}  // namespace rispac
