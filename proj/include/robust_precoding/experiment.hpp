#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "robust_precoding/channel_model.hpp"
#include "robust_precoding/robust_design.hpp"

namespace rbp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Phase seed of the default scenario's estimated channels.
inline constexpr std::uint64_t kDefaultPhaseSeed = 23;

enum class ExperimentMode { power_min, ammse_min, ammse_min_ignorant, duality_check, moment_check };

const char* to_string(ExperimentMode mode);
ExperimentMode parse_mode(const std::string& name);

/// How the targets of the budget-constrained modes are given.
enum class TargetUnit { power, snr_db };

/// Targets per mode:
///   power_min, duality_check      AMMSE targets in (0, 1)
///   ammse_min, ammse_min_ignorant transmit powers, or SNRs in dB with TargetUnit::snr_db
///   moment_check                  error variances cycled over the random cases
struct ExperimentSpec {
  ChannelConfig channel;
  ExperimentMode mode = ExperimentMode::power_min;
  std::vector<double> targets;
  TargetUnit target_unit = TargetUnit::power;
  std::size_t mc_count = 4000;  ///< verification draws; brute-force draws per case in moment_check
  AlgoConfig algo;
  std::string output_dir = "out";
  int workers = 1;              ///< concurrent sweep points
  int moment_cases = 50;
  double moment_pass_fraction = 0.96;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& spec);
void from_json(const nlohmann::json& j, ExperimentSpec& spec);

/// Four transmit antennas, four users, path gains {1, 1, 1, 0.5}, CSIT error
/// variances {0.05, 0.05, 0.05, 0.1}, unit noise and phases drawn from
/// kDefaultPhaseSeed.
ChannelConfig default_paper_scenario();

/// Default spec of a mode on the default scenario.
ExperimentSpec default_experiment(ExperimentMode mode);

/// (1/K) sum_k noise / path_gain_k.
double average_noise_ratio(const ChannelConfig& config);
/// Transmit power giving SNR = P / (K * average_noise_ratio).
double snr_db_to_power(const ChannelConfig& config, double snr_db);
double power_to_snr_db(const ChannelConfig& config, double power);

/// 1-based index of the user with the weakest path gain (largest CSIT error on ties).
int least_fortunate_user(const ChannelConfig& config);

/// Process exit codes.
enum ExitCode : int {
  exit_ok = 0,
  exit_other = 1,
  exit_config = 2,
  exit_infeasible = 3,
  exit_numerical = 4,
  exit_check_failed = 5,
};

struct ExperimentOutcome {
  int exit_code = exit_ok;
  std::vector<std::string> files;  ///< written files, relative to output_dir
  std::string summary;             ///< one-line human-readable result
};

/// Runs every target of the spec and writes into spec.output_dir:
///   <mode>_<i>.json            full report per target
///   <mode>_<i>.iterations.csv  iteration trace (design modes)
///   summary.csv                one row per target
///   plot.gp                    gnuplot script over summary.csv
///   manifest.json              seeds, version, timestamp
/// Throws ConfigError on an invalid spec.
ExperimentOutcome run(const ExperimentSpec& spec);

// Random quartic-moment cases of the moment_check mode.

struct MomentCase {
  MomentInputs inputs;
  double closed_form = 0.0;
  McEstimate brute_force;
};

/// Random Hermitian PSD A, B, random mean, error variance `cov_scale`, of size n.
MomentInputs random_moment_inputs(int n, double cov_scale, std::uint64_t seed);

/// Sample mean and standard error of (x^H A x)(x^H B x) over `count` draws.
McEstimate brute_force_quartic(const MomentInputs& inputs, std::size_t count, std::uint64_t seed, int workers = 1);

}  // namespace rbp
