#pragma once

#include <string>
#include <vector>

#include "rispac/common.hpp"

namespace rispac::sdp {

enum class BlockKind { Psd, NonNeg };
enum class Relation { Eq, Le, Ge };

struct BlockSpec {
  BlockKind kind = BlockKind::Psd;
  int size = 1;
};

/// One addend of a block-structured linear functional: <coeff, X_block>.
/// Psd blocks carry a symmetric size x size matrix, NonNeg blocks a size x 1
/// column of per-entry weights.
struct BlockTerm {
  int block = 0;
  Mat coeff;
};

struct LinearExpr {
  std::vector<BlockTerm> terms;
};

struct Constraint {
  LinearExpr expr;
  Relation rel = Relation::Eq;
  double rhs = 0.0;
};

/// Conic program: minimize <C, X> over a product of PSD and nonnegative
/// blocks subject to linear constraints.
struct SdpProblem {
  std::vector<BlockSpec> blocks;
  LinearExpr objective;
  std::vector<Constraint> constraints;

  void validate() const {
    auto check_expr = [&](const LinearExpr& e, const std::string& where) {
      for (const BlockTerm& t : e.terms) {
        if (t.block < 0 || t.block >= static_cast<int>(blocks.size()))
          throw InvalidArgument(where + ": block index out of range");
        const BlockSpec& b = blocks[t.block];
        if (b.kind == BlockKind::Psd) {
          if (t.coeff.rows() != b.size || t.coeff.cols() != b.size)
            throw InvalidArgument(where + ": coefficient size mismatch");
          if ((t.coeff - t.coeff.transpose()).cwiseAbs().maxCoeff() >
              1e-12 * std::max(1.0, t.coeff.cwiseAbs().maxCoeff()))
            throw InvalidArgument(where + ": coefficient matrix is not symmetric");
        } else {
          if (t.coeff.rows() != b.size || t.coeff.cols() != 1)
            throw InvalidArgument(where + ": nonneg coefficient must be size x 1");
        }
      }
    };
    for (const BlockSpec& b : blocks)
      if (b.size < 1) throw InvalidArgument("block size must be >= 1");
    check_expr(objective, "objective");
    for (size_t i = 0; i < constraints.size(); ++i)
      check_expr(constraints[i].expr, "constraint " + std::to_string(i));
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    default: return "max_iter";
  }
}

struct IterStat {
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double mu = 0.0;
  double res_primal = 0.0;
  double res_dual = 0.0;
};

struct SdpSolution {
  std::vector<Mat> x;  // primal blocks (NonNeg blocks as size x 1 columns)
  std::vector<Mat> s;  // dual slack blocks
  Vec y;               // constraint multipliers
  SolveStatus status = SolveStatus::MaxIter;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double gap_rel = 0.0;
  double res_primal = 0.0;
  double res_dual = 0.0;
  double certificate_residual = 0.0;  // set when status is Infeasible/Unbounded
  int iterations = 0;
  bool ridge_used = false;
  std::vector<IterStat> history;
};

}  // namespace rispac::sdp
