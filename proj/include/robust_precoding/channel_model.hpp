#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "robust_precoding/types.hpp"

namespace rbp {

/// Scenario description: array size, per-user path gains and CSIT error
/// variances, receiver noise, and the phase of each user's estimated channel.
///
/// The estimate power of user k is path_gains[k] - csit_error_vars[k]. When
/// `phases` is empty the phases are drawn uniformly on [0, 2pi) from `seed`.
struct ChannelConfig {
  int num_tx_antennas = 0;
  int num_users = 0;
  std::vector<double> path_gains;
  std::vector<double> csit_error_vars;
  double noise_var = 1.0;
  std::optional<std::vector<double>> phases;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Transmitter-side channel knowledge: estimates h_hat_k and the variance of
/// the i.i.d. circularly-symmetric estimation error of each user.
struct ChannelInstance {
  std::vector<CVector> estimates;
  std::vector<double> error_vars;
  double noise_var = 1.0;

  int num_users() const { return static_cast<int>(estimates.size()); }
  int num_antennas() const { return estimates.empty() ? 0 : static_cast<int>(estimates.front().size()); }

  /// h_hat_k h_hat_k^H + sigma_ek^2 I, the mean of h_k h_k^H.
  CMatrix channel_correlation(int k) const;

  void validate() const;
};

/// One realisation of all users' true channels.
struct ChannelSample {
  std::vector<CVector> realizations;
};

/// Phases drawn uniformly on [0, 2pi) from a 64-bit generator.
std::vector<double> draw_phases(int num_users, std::uint64_t seed);

/// Copy of `config` whose phases are redrawn from `seed`.
ChannelConfig with_random_phases(ChannelConfig config, std::uint64_t seed);

/// h_hat_k[m] = sigma_ck * exp(j m phi_k), sigma_ck = sqrt(sigma_k^2 - sigma_ek^2).
ChannelInstance build_instance(const ChannelConfig& config);

// Monte-Carlo sampling.
//
// Sample i belongs to chunk i / kSampleChunk. Every chunk owns a generator
// seeded from (seed, chunk index), so any partition of the index range into
// whole chunks reproduces the same samples.

inline constexpr std::size_t kSampleChunk = 1024;

using SampleVisitor = std::function<void(std::size_t index, const ChannelSample&)>;

/// Generates samples [chunk * kSampleChunk, min(count, (chunk + 1) * kSampleChunk)).
void generate_chunk(const ChannelInstance& instance, std::size_t count, std::uint64_t seed,
                    std::size_t chunk, const SampleVisitor& visit);

/// Visits all `count` samples in index order.
void for_each_sample(const ChannelInstance& instance, std::size_t count, std::uint64_t seed,
                     const SampleVisitor& visit);

std::vector<ChannelSample> sample_channels(const ChannelInstance& instance, std::size_t count,
                                           std::uint64_t seed);

/// Runs `work(chunk)` for every chunk of a `count`-sized range on up to
/// `workers` threads. Work items must only write to per-chunk storage.
void parallel_chunks(std::size_t count, int workers, const std::function<void(std::size_t)>& work);

inline std::size_t num_chunks(std::size_t count) { return (count + kSampleChunk - 1) / kSampleChunk; }

void to_json(nlohmann::json& j, const ChannelConfig& config);
void from_json(const nlohmann::json& j, ChannelConfig& config);

}  // namespace rbp
