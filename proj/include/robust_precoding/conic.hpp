#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "robust_precoding/types.hpp"

namespace rbp {

// Standard-form real conic program
//
//   minimise    sum_b <C_b, X_b>
//   subject to  sum_b <A_ib, X_b>  (<=, =, >=)  rhs_i
//               X_b psd (symmetric blocks) or X_b >= 0 (diagonal blocks)
//
// Coefficient matrices are given as triplets on the upper triangle: an
// off-diagonal triplet (r, c, v) stands for v at both (r, c) and (c, r), so
// <A, X> picks up 2 v X_rc. Diagonal (nonneg) blocks only take r == c.

enum class ConeKind { psd, nonneg };

struct BlockSpec {
  ConeKind kind = ConeKind::psd;
  int dim = 0;
};

struct Triplet {
  int block = 0;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

enum class Sense { le, eq, ge };

struct LinearConstraint {
  std::vector<Triplet> coefficients;
  Sense sense = Sense::le;
  double rhs = 0.0;
};

struct ConicProblem {
  std::vector<BlockSpec> blocks;
  std::vector<Triplet> objective;
  std::vector<LinearConstraint> constraints;

  void validate() const;
  /// Dense symmetric coefficient matrices (diagonal matrices for nonneg blocks).
  std::vector<RMatrix> dense(const std::vector<Triplet>& triplets) const;
  /// sum_b <M_b, X_b> for dense symmetric M and X.
  static double inner(const std::vector<RMatrix>& m, const std::vector<RMatrix>& x);
};

enum class SolveStatus { optimal, infeasible, numerical_failure, iteration_limit };

const char* to_string(SolveStatus status);

struct SolverStats {
  int iterations = 0;
  double primal_residual = 0.0;  ///< relative
  double dual_residual = 0.0;    ///< relative
  double gap = 0.0;              ///< relative duality gap
  std::string detail;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  double objective_value = 0.0;
  double dual_objective = 0.0;
  std::vector<RMatrix> blocks;  ///< primal X_b, diagonal matrices for nonneg blocks
  RVector duals;                ///< one multiplier per constraint
  SolverStats stats;
};

struct SolverSettings {
  double feasibility_tol = 1e-8;
  double gap_tol = 1e-8;
  double infeasibility_tol = 1e-8;
  double tol_psd = 1e-9;
  int max_iterations = 150;
};

/// A conic solver backend. Implementations must be safe to call concurrently.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual std::string name() const = 0;
  virtual const SolverSettings& settings() const = 0;
  virtual ConicSolution solve(const ConicProblem& problem) const = 0;
};

/// Default backend (homogeneous self-dual interior point, HKM direction).
std::shared_ptr<const ConicBackend> default_backend(const SolverSettings& settings = {});

// Complex Hermitian <-> real symmetric embedding
//
//   Q = Re + j Im   <->   X = [[Re, -Im], [Im, Re]]
//
// tr(A Q) = tr(embed(A) X) / 2 for Hermitian A and Q, and the eigenvalues of X
// are those of Q, each appearing twice.

RMatrix embed_hermitian(const CMatrix& q);
/// Inverse of embed_hermitian; a general symmetric X is first projected onto
/// the embedded structure (this preserves positive semidefiniteness).
CMatrix unembed_hermitian(const RMatrix& x);

/// Adds the upper triangle of scale * embed(a) to `out` as triplets on `block`.
void append_embedded(std::vector<Triplet>& out, int block, const CMatrix& a, double scale);

// Plain-text dump for cross-checking against an independent solver:
//
//   conic-problem v1
//   blocks <count>
//   psd|nonneg <dim>                   (one line per block, 0-based ids)
//   objective <count>
//   <block> <row> <col> <value>        (one line per triplet)
//   constraints <count>
//   le|eq|ge <rhs> <count>             (per constraint, followed by triplets)
//   <block> <row> <col> <value>
void write_problem(std::ostream& os, const ConicProblem& problem);
ConicProblem read_problem(std::istream& is);

void to_json(nlohmann::json& j, const SolverStats& stats);

}  // namespace rbp
