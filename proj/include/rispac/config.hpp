#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rispac/common.hpp"
#include "rispac/geometry.hpp"

namespace rispac {

enum class PhaseMode { Discrete, Continuous, Random, Identity };
enum class PebMode { Strict, Pseudo };

inline const char* to_string(PhaseMode m) {
  switch (m) {
    case PhaseMode::Discrete: return "discrete";
    case PhaseMode::Continuous: return "continuous";
    case PhaseMode::Random: return "random";
    default: return "identity";
  }
}

inline PhaseMode phase_mode_from_string(const std::string& s) {
  if (s == "discrete") return PhaseMode::Discrete;
  if (s == "continuous") return PhaseMode::Continuous;
  if (s == "random") return PhaseMode::Random;
  if (s == "identity") return PhaseMode::Identity;
  throw InvalidArgument("unknown phase_mode: " + s);
}

/// Full experiment description. File schema (version 1) mirrors the field
/// names below; lengths are meters, frequencies Hz, angles in files are
/// degrees and converted to radians on load.
struct SystemConfig {
  ArrayGeometry bs;   // transmit array, reference_point is the BS location
  ArrayGeometry ris;  // reflecting surface, reference_point is the RIS location
  std::vector<Vec3> ue_positions;
  std::vector<int> obstruction;      // 1 = direct link available, 0 = blocked
  double fc = 30e9;                  // carrier, Hz
  double delta_f = 120e3;            // subcarrier spacing, Hz
  int n_subcarriers = 8;             // sums run over n = 1..N
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_db = 8.0;
  std::vector<double> rate_req;       // bps/Hz per UE
  std::vector<double> peb_threshold;  // meters per UE, +inf disables
  PhaseMode phase_mode = PhaseMode::Continuous;
  int q_bits = 2;        // discrete mode: L = 2^q levels
  int position_dim = 2;  // unknown UE coordinates (2 = height known)
  PebMode peb_mode = PebMode::Strict;
  std::uint64_t seed = 1;
  int ris_partitions = 1;         // sub-array count (1 = whole surface)
  int stage1_starts = 8;          // random restarts for the discrete search
  int randomization_trials = 64;  // Gaussian randomization candidates
  int scenario_id = 0;            // informational tag for result tables

  int n_ues() const { return static_cast<int>(ue_positions.size()); }
  int n_tx() const { return bs.size(); }
  int n_ris() const { return ris.size(); }
  int phase_levels() const { return 1 << q_bits; }

  /// Per-subcarrier noise power used as the N0 of every SNR-type expression.
  double noise_variance() const {
    return dbm_to_watt(noise_psd_dbm_hz) * delta_f * db_to_linear(noise_figure_db);
  }

  std::vector<std::string> validate() const;
};

inline std::vector<std::string> SystemConfig::validate() const {
  std::vector<std::string> issues;
  auto req = [&](bool ok, const std::string& msg) {
    if (!ok) issues.push_back(msg);
  };
  req(fc > 0, "fc_hz must be > 0");
  req(delta_f > 0, "delta_f_hz must be > 0");
  req(n_subcarriers > 0, "n_subcarriers must be > 0");
  req(noise_variance() > 0, "noise power must be > 0");
  req(bs.size() >= 1, "bs: at least one element");
  req(ris.size() >= 1, "ris: at least one element");
  req(bs.rows * bs.cols == bs.size(), "bs: rows*cols mismatch");
  req(ris.rows * ris.cols == ris.size(), "ris: rows*cols mismatch");
  const int k = n_ues();
  req(k >= 1, "ue_positions_m: at least one UE");
  req(static_cast<int>(obstruction.size()) == k, "obstruction: length must equal number of UEs");
  req(static_cast<int>(rate_req.size()) == k, "rate_req_bpshz: length must equal number of UEs");
  req(static_cast<int>(peb_threshold.size()) == k,
      "peb_threshold_m: length must equal number of UEs");
  for (int v : obstruction) req(v == 0 || v == 1, "obstruction: entries must be 0 or 1");
  for (double r : rate_req) req(r >= 0, "rate_req_bpshz: entries must be >= 0");
  for (double d : peb_threshold) req(d > 0, "peb_threshold_m: entries must be > 0");
  if (phase_mode == PhaseMode::Discrete) req(q_bits >= 1, "q_bits: must be >= 1 in discrete mode");
  req(position_dim == 2 || position_dim == 3, "position_dim must be 2 or 3");
  req(ris_partitions >= 1, "ris_partitions must be >= 1");
  if (ris_partitions > 1)
    req(ris.rows % ris_partitions == 0,
        "ris_partitions must divide the RIS row count");
  req(stage1_starts >= 0, "stage1_starts must be >= 0");
  req(randomization_trials >= 1, "randomization_trials must be >= 1");
  for (const Vec3& u : ue_positions) {
    req((u - bs.reference_point).norm() > 1e-9, "ue coincides with the BS");
    req((u - ris.reference_point).norm() > 1e-9, "ue coincides with the RIS");
  }
  return issues;
}

namespace detail {

inline ArrayGeometry array_from_json(const nlohmann::json& j, double fc) {
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  double spacing;
  if (j.contains("spacing_m") && !j["spacing_m"].is_null())
    spacing = j["spacing_m"].get<double>();
  else
    spacing = 0.5 * kSpeedOfLight / fc;  // half wavelength at the carrier
  ArrayGeometry g = upa_coordinates(rows, cols, spacing);
  const auto& p = j.at("position_m");
  g.reference_point = Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  return g;
}

inline nlohmann::ordered_json array_to_json(const ArrayGeometry& g) {
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"spacing_m", g.element_spacing},
          {"position_m", {g.reference_point.x(), g.reference_point.y(), g.reference_point.z()}}};
}

inline std::vector<double> per_ue_list(const nlohmann::json& j, int k) {
  std::vector<double> out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.is_null() ? kInf : v.get<double>());
  } else {
    out.assign(k, j.is_null() ? kInf : j.get<double>());
  }
  return out;
}

}  // namespace detail

inline SystemConfig config_from_json(const nlohmann::json& j) {
  if (j.value("schema", 0) != 1)
    throw InvalidArgument("config: expected schema = 1");
  SystemConfig cfg;
  cfg.fc = j.at("fc_hz").get<double>();
  cfg.delta_f = j.at("delta_f_hz").get<double>();
  cfg.n_subcarriers = j.at("n_subcarriers").get<int>();
  cfg.bs = detail::array_from_json(j.at("bs"), cfg.fc);
  cfg.ris = detail::array_from_json(j.at("ris"), cfg.fc);
  if (j.contains("ue_positions_m")) {
    for (const auto& u : j["ue_positions_m"])
      cfg.ue_positions.emplace_back(u.at(0).get<double>(), u.at(1).get<double>(),
                                    u.at(2).get<double>());
  }
  if (j.contains("ue_polar")) {
    // {range_m, azimuth_deg, elevation_deg} relative to the BS position
    for (const auto& u : j["ue_polar"]) {
      const double range = u.at("range_m").get<double>();
      const double az = u.at("azimuth_deg").get<double>() * kPi / 180.0;
      const double el = u.at("elevation_deg").get<double>() * kPi / 180.0;
      cfg.ue_positions.push_back(cfg.bs.reference_point +
                                 range * Vec3(std::sin(el) * std::cos(az),
                                              std::sin(el) * std::sin(az), std::cos(el)));
    }
  }
  const int k = cfg.n_ues();
  cfg.obstruction = j.at("obstruction").get<std::vector<int>>();
  cfg.noise_psd_dbm_hz = j.value("noise_psd_dbm_hz", -174.0);
  cfg.noise_figure_db = j.value("noise_figure_db", 8.0);
  cfg.rate_req = detail::per_ue_list(j.at("rate_req_bpshz"), k);
  for (double& r : cfg.rate_req)
    if (!std::isfinite(r)) throw InvalidArgument("rate_req_bpshz must be finite");
  cfg.peb_threshold = j.contains("peb_threshold_m") ? detail::per_ue_list(j["peb_threshold_m"], k)
                                                    : std::vector<double>(k, kInf);
  cfg.phase_mode = phase_mode_from_string(j.value("phase_mode", std::string("continuous")));
  cfg.q_bits = j.value("q_bits", 2);
  cfg.position_dim = j.value("position_dim", 2);
  cfg.peb_mode = j.value("peb_mode", std::string("strict")) == "pseudo" ? PebMode::Pseudo
                                                                        : PebMode::Strict;
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.ris_partitions = j.value("ris_partitions", 1);
  cfg.stage1_starts = j.value("stage1_starts", 8);
  cfg.randomization_trials = j.value("randomization_trials", 64);
  cfg.scenario_id = j.value("scenario_id", 0);
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const SystemConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["scenario_id"] = cfg.scenario_id;
  j["fc_hz"] = cfg.fc;
  j["delta_f_hz"] = cfg.delta_f;
  j["n_subcarriers"] = cfg.n_subcarriers;
  j["bs"] = detail::array_to_json(cfg.bs);
  j["ris"] = detail::array_to_json(cfg.ris);
  auto ues = nlohmann::ordered_json::array();
  for (const Vec3& u : cfg.ue_positions) ues.push_back({u.x(), u.y(), u.z()});
  j["ue_positions_m"] = ues;
  j["obstruction"] = cfg.obstruction;
  j["noise_psd_dbm_hz"] = cfg.noise_psd_dbm_hz;
  j["noise_figure_db"] = cfg.noise_figure_db;
  j["rate_req_bpshz"] = cfg.rate_req;
  auto pebs = nlohmann::ordered_json::array();
  for (double d : cfg.peb_threshold)
    pebs.push_back(std::isfinite(d) ? nlohmann::ordered_json(d) : nlohmann::ordered_json(nullptr));
  j["peb_threshold_m"] = pebs;
  j["phase_mode"] = to_string(cfg.phase_mode);
  j["q_bits"] = cfg.q_bits;
  j["position_dim"] = cfg.position_dim;
  j["peb_mode"] = cfg.peb_mode == PebMode::Pseudo ? "pseudo" : "strict";
  j["seed"] = cfg.seed;
  j["ris_partitions"] = cfg.ris_partitions;
  j["stage1_starts"] = cfg.stage1_starts;
  j["randomization_trials"] = cfg.randomization_trials;
  return j;
}

inline SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

inline void save_config(const SystemConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write config file: " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace rispac
