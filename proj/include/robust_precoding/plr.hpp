#pragma once

#include <optional>
#include <vector>

#include "robust_precoding/ammse.hpp"
#include "robust_precoding/channel_model.hpp"
#include "robust_precoding/conic.hpp"

namespace rbp {

/// Which per-user AMMSE model the power-minimisation constraints use.
enum class ConstraintModel {
  /// 1 - alpha_k R_bar_k / T_bar_k <= eps (receivers know the true channel).
  aware,
  /// 1 - |h_hat_k^H p_k|^2 / T_bar_k <= eps (receivers built from CSIT only).
  ignorant,
};

/// Linearised (alpha frozen), rank-relaxed power minimisation:
///
///   min  P0
///   s.t. sum_i tr(Q_i) <= P0
///        sum_i tr(Q_i A_k) + noise <= alpha_k / (1 - eps) tr(Q_k S_k)   for all k
///        Q_k psd
///
/// with A_k = h_hat_k h_hat_k^H + sigma_ek^2 I, and S_k = A_k (aware) or
/// h_hat_k h_hat_k^H (ignorant, alpha_k = 1).
struct PlrSpec {
  ChannelInstance instance;
  double epsilon_target = 0.5;
  std::vector<double> alphas;
  ConstraintModel model = ConstraintModel::aware;

  void validate() const;
};

/// Variable layout of the conic program built from a PlrSpec: blocks
/// 0..K-1 are the embedded Q_k (size 2 N_t), block K is the scalar P0.
/// Constraint 0 is the power constraint, constraint 1 + k is user k's.
ConicProblem build_plr(const PlrSpec& spec);

struct ExtractionReport {
  Precoder precoder;
  GramSet relaxed;                    ///< un-embedded Q_k as returned by the solver
  std::vector<double> eigen_ratios;   ///< lambda_2 / lambda_1 of each Q_k
  std::vector<double> ammse_recheck;  ///< constraint-model AMMSE of the rank-1 precoder
  std::vector<double> violations;     ///< normalised constraint violation of the rank-1 precoder
  bool feasible_after_extraction = false;
};

/// Principal-eigenvector precoder of each relaxed Q_k, re-checked against
/// the P_lr constraints. Throws NumericalError on a negative leading
/// eigenvalue and ConfigError when the solution is not optimal.
ExtractionReport extract_precoder(const ConicSolution& solution, const PlrSpec& spec,
                                  const SolverSettings& settings = {});

/// Un-embeds the K Gram blocks of a P_lr solution.
GramSet plr_gram(const ConicSolution& solution, const PlrSpec& spec, double tol_psd);

/// Per-user (lhs - rhs) / T_bar_k of the P_lr constraints for the given Gram set.
std::vector<double> plr_violations(const PlrSpec& spec, const GramSet& gram);

/// AMMSE value each constraint bounds: 1 - alpha_k R_bar_k / T_bar_k (aware)
/// or the ignorant AMMSE.
std::vector<double> plr_model_ammse(const PlrSpec& spec, const GramSet& gram);

/// Empirical lower end of the feasible target range for fixed alphas:
/// bisection on eps in (0, 1) over feasibility of P_lr, to width `width`.
/// Returns the smallest target observed feasible.
std::optional<double> probe_feasibility_floor(const ChannelInstance& instance, const std::vector<double>& alphas,
                                              ConstraintModel model, const ConicBackend& backend,
                                              double width = 1e-4);

}  // namespace rbp
