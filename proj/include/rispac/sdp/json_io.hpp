#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "rispac/sdp/problem.hpp"

namespace rispac::sdp {

/// Problem capture schema: {"blocks": [{"kind": "psd"|"nonneg", "size": n}],
/// "objective": [term...], "constraints": [{"relation": "eq"|"le"|"ge",
/// "rhs": v, "terms": [term...]}]} where a term is {"block": b, "entries":
/// [[i, j, value]...]} listing the upper triangle (nonneg blocks use i == j).
inline nlohmann::ordered_json problem_to_json(const SdpProblem& p) {
  auto expr_to_json = [&](const LinearExpr& e) {
    auto terms = nlohmann::ordered_json::array();
    for (const BlockTerm& t : e.terms) {
      auto entries = nlohmann::ordered_json::array();
      if (p.blocks[t.block].kind == BlockKind::Psd) {
        for (int i = 0; i < t.coeff.rows(); ++i)
          for (int j = i; j < t.coeff.cols(); ++j)
            if (t.coeff(i, j) != 0.0) entries.push_back({i, j, t.coeff(i, j)});
      } else {
        for (int i = 0; i < t.coeff.rows(); ++i)
          if (t.coeff(i, 0) != 0.0) entries.push_back({i, i, t.coeff(i, 0)});
      }
      terms.push_back({{"block", t.block}, {"entries", entries}});
    }
    return terms;
  };
  nlohmann::ordered_json j;
  auto blocks = nlohmann::ordered_json::array();
  for (const BlockSpec& b : p.blocks)
    blocks.push_back(
        {{"kind", b.kind == BlockKind::Psd ? "psd" : "nonneg"}, {"size", b.size}});
  j["blocks"] = blocks;
  j["objective"] = expr_to_json(p.objective);
  auto cons = nlohmann::ordered_json::array();
  for (const Constraint& c : p.constraints) {
    const char* rel = c.rel == Relation::Eq ? "eq" : (c.rel == Relation::Le ? "le" : "ge");
    cons.push_back({{"relation", rel}, {"rhs", c.rhs}, {"terms", expr_to_json(c.expr)}});
  }
  j["constraints"] = cons;
  return j;
}

inline SdpProblem problem_from_json(const nlohmann::json& j) {
  SdpProblem p;
  for (const auto& b : j.at("blocks")) {
    BlockSpec spec;
    const std::string kind = b.at("kind").get<std::string>();
    if (kind == "psd")
      spec.kind = BlockKind::Psd;
    else if (kind == "nonneg")
      spec.kind = BlockKind::NonNeg;
    else
      throw InvalidArgument("sdp problem: unknown block kind " + kind);
    spec.size = b.at("size").get<int>();
    p.blocks.push_back(spec);
  }
  auto expr_from_json = [&](const nlohmann::json& terms) {
    LinearExpr e;
    for (const auto& t : terms) {
      BlockTerm bt;
      bt.block = t.at("block").get<int>();
      if (bt.block < 0 || bt.block >= static_cast<int>(p.blocks.size()))
        throw InvalidArgument("sdp problem: block index out of range");
      const BlockSpec& spec = p.blocks[bt.block];
      bt.coeff = spec.kind == BlockKind::Psd ? Mat::Zero(spec.size, spec.size)
                                             : Mat::Zero(spec.size, 1);
      for (const auto& ent : t.at("entries")) {
        const int i = ent.at(0).get<int>();
        const int jj = ent.at(1).get<int>();
        const double v = ent.at(2).get<double>();
        if (spec.kind == BlockKind::Psd) {
          bt.coeff(i, jj) = v;
          bt.coeff(jj, i) = v;
        } else {
          if (i != jj) throw InvalidArgument("sdp problem: nonneg entries must be diagonal");
          bt.coeff(i, 0) = v;
        }
      }
      e.terms.push_back(std::move(bt));
    }
    return e;
  };
  p.objective = expr_from_json(j.at("objective"));
  for (const auto& c : j.at("constraints")) {
    Constraint con;
    const std::string rel = c.at("relation").get<std::string>();
    con.rel = rel == "eq" ? Relation::Eq : (rel == "le" ? Relation::Le : Relation::Ge);
    con.rhs = c.at("rhs").get<double>();
    con.expr = expr_from_json(c.at("terms"));
    p.constraints.push_back(std::move(con));
  }
  p.validate();
  return p;
}

inline SdpProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open problem file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
  return problem_from_json(j);
}

inline void save_problem(const SdpProblem& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write problem file: " + path);
  out << problem_to_json(p).dump(2) << "\n";
}

}  // namespace rispac::sdp
