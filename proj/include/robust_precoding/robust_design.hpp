#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "robust_precoding/ammse.hpp"
#include "robust_precoding/conic.hpp"
#include "robust_precoding/plr.hpp"

namespace rbp {

/// Gram matrices the alpha recursion is evaluated on.
enum class AlphaSource { relaxed_gram, rank_one };

struct AlgoConfig {
  double eps_power = 1e-4;   ///< stop when |P0(n) - P0(n-1)| < eps_power
  double eps_t = 1e-4;       ///< stop when |t0(n) - t0(n-1)| < eps_t
  double eps_bisect = 1e-4;  ///< bisection interval width
  int n_max = 50;
  double alpha_lo = 0.05;
  double alpha_hi = 1.0;
  AlphaSource alpha_source = AlphaSource::relaxed_gram;
  bool verify = true;             ///< Monte-Carlo check of the final precoder
  std::size_t mc_count = 4000;
  std::uint64_t mc_seed = 4000;
  int mc_workers = 1;
  SolverSettings solver;

  void validate() const;
};

enum class DesignStatus { converged, max_iterations, infeasible_at_target, budget_infeasible, numerical_failure };

const char* to_string(DesignStatus status);

struct IterationRecord {
  int n = 0;
  double objective = 0.0;             ///< P0(n) for power minimisation, t0(n) otherwise
  std::vector<double> alphas_in;      ///< alphas the n-th subproblem was solved with
  std::vector<double> alphas_out;     ///< updated alphas (clamped)
  std::vector<double> alphas_raw;     ///< updated alphas before clamping (NaN if undefined)
  std::vector<bool> clamped;
  std::vector<double> eigen_ratios;
  std::vector<double> violations;     ///< normalised constraint violations of the relaxed solution
  int solver_calls = 0;
  double wall_time = 0.0;             ///< seconds
};

struct UserVerification {
  double first_order = 0.0;
  double taylor_ammse = 0.0;
  double ignorant_ammse = 0.0;
  /// Monte-Carlo average MSE of the receivers in use: MMSE receivers for the
  /// aware designs, the forwarded CSIT-only receivers for the ignorant one.
  double mc_ammse = 0.0;
  double mc_std_error = 0.0;
};

struct SolveReport {
  std::string algorithm;
  ConstraintModel model = ConstraintModel::aware;
  DesignStatus status = DesignStatus::numerical_failure;
  std::string message;
  std::vector<IterationRecord> iterations;
  std::optional<Precoder> final_precoder;
  double final_objective = 0.0;
  double final_power = 0.0;
  std::vector<double> final_alphas;  ///< alphas used by the last successful subproblem
  bool converged = false;
  bool feasible_after_extraction = false;
  int clamp_events = 0;
  std::vector<UserVerification> verification;

  double worst_taylor_ammse() const;
  double worst_mc_ammse() const;
  /// Index of the user with the largest Monte-Carlo AMMSE.
  int worst_user() const;
};

/// Result of the bisection over P_lr targets at fixed alphas.
struct FixedAlphaResult {
  DesignStatus status = DesignStatus::numerical_failure;
  std::string message;
  double t0 = 1.0;
  double power = 0.0;                     ///< P_lr objective at t0
  std::vector<double> midpoints;          ///< targets evaluated, in order
  std::optional<ExtractionReport> extraction;
  int solver_calls = 0;
};

/// Power minimisation under per-user AMMSE targets with the
/// recursive alpha update.
SolveReport minimize_power(const ChannelInstance& instance, double eps_target, const AlgoConfig& config,
                           std::shared_ptr<const ConicBackend> backend = nullptr);

/// Min max AMMSE at fixed alphas under a power budget, by
/// bisection on the P_lr target.
FixedAlphaResult minimize_maxammse_fixed_alpha(const ChannelInstance& instance, double power_budget,
                                               const std::vector<double>& alphas, const AlgoConfig& config,
                                               ConstraintModel model = ConstraintModel::aware,
                                               std::shared_ptr<const ConicBackend> backend = nullptr);

/// Min max AMMSE under a power budget with the alpha recursion.
SolveReport minimize_maxammse(const ChannelInstance& instance, double power_budget, const AlgoConfig& config,
                              std::shared_ptr<const ConicBackend> backend = nullptr);

/// Baseline that designs against the CSIT-only (ignorant) AMMSE; one bisection pass.
SolveReport minimize_maxammse_ignorant(const ChannelInstance& instance, double power_budget, const AlgoConfig& config,
                                       std::shared_ptr<const ConicBackend> backend = nullptr);

void to_json(nlohmann::json& j, const IterationRecord& record);
void to_json(nlohmann::json& j, const UserVerification& v);
void to_json(nlohmann::json& j, const SolveReport& report);
void to_json(nlohmann::json& j, const AlgoConfig& config);
void from_json(const nlohmann::json& j, AlgoConfig& config);

/// One row per iteration: n, objective, max |delta alpha|, worst eigen ratio.
void write_iterations_csv(std::ostream& os, const SolveReport& report);

}  // namespace rbp
