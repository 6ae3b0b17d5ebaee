#include "robust_precoding/channel_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

namespace rbp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t chunk_seed(std::uint64_t seed, std::size_t chunk) {
  return splitmix64(splitmix64(seed) ^ (0xd1b54a32d192ed03ULL * (chunk + 1)));
}

}  // namespace

void ChannelConfig::validate() const {
  if (num_users < 1) throw ConfigError("num_users must be at least 1");
  if (num_tx_antennas < num_users)
    throw ConfigError("num_tx_antennas must be at least num_users");
  const auto k = static_cast<std::size_t>(num_users);
  if (path_gains.size() != k) throw ConfigError("path_gains must have one entry per user");
  if (csit_error_vars.size() != k) throw ConfigError("csit_error_vars must have one entry per user");
  if (phases && phases->size() != k) throw ConfigError("phases must have one entry per user");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw ConfigError("noise_var must be positive");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(path_gains[i] > 0.0) || !std::isfinite(path_gains[i]))
      throw ConfigError("path gain of user " + std::to_string(i + 1) + " must be positive");
    if (!(csit_error_vars[i] >= 0.0))
      throw ConfigError("CSIT error variance of user " + std::to_string(i + 1) + " must be nonnegative");
    if (csit_error_vars[i] > path_gains[i])
      throw ConfigError("CSIT error variance of user " + std::to_string(i + 1) + " exceeds its path gain");
    if (phases && !std::isfinite((*phases)[i]))
      throw ConfigError("phase of user " + std::to_string(i + 1) + " is not finite");
  }
}

CMatrix ChannelInstance::channel_correlation(int k) const {
  const auto& h = estimates.at(static_cast<std::size_t>(k));
  CMatrix r = h * h.adjoint();
  r.diagonal().array() += error_vars[static_cast<std::size_t>(k)];
  return r;
}

void ChannelInstance::validate() const {
  if (estimates.empty()) throw ConfigError("channel instance has no users");
  if (error_vars.size() != estimates.size()) throw ConfigError("one error variance per user required");
  const auto n = estimates.front().size();
  if (n == 0) throw ConfigError("channel estimates must be nonempty");
  for (const auto& h : estimates)
    if (h.size() != n) throw ConfigError("all channel estimates must have the same length");
  for (double v : error_vars)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("error variances must be nonnegative");
  if (!(noise_var > 0.0)) throw ConfigError("noise_var must be positive");
}

std::vector<double> draw_phases(int num_users, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> phases(static_cast<std::size_t>(std::max(num_users, 0)));
  for (auto& phi : phases) {
    // 53 random mantissa bits, uniform on [0, 1).
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    phi = 2.0 * std::numbers::pi * u;
  }
  return phases;
}

ChannelConfig with_random_phases(ChannelConfig config, std::uint64_t seed) {
  config.phases = draw_phases(config.num_users, seed);
  return config;
}

ChannelInstance build_instance(const ChannelConfig& config) {
  config.validate();
  const auto phases = config.phases ? *config.phases : draw_phases(config.num_users, config.seed);

  ChannelInstance instance;
  instance.noise_var = config.noise_var;
  instance.error_vars = config.csit_error_vars;
  instance.estimates.reserve(static_cast<std::size_t>(config.num_users));
  for (std::size_t k = 0; k < static_cast<std::size_t>(config.num_users); ++k) {
    const double sigma_c = std::sqrt(config.path_gains[k] - config.csit_error_vars[k]);
    CVector h(config.num_tx_antennas);
    for (int m = 0; m < config.num_tx_antennas; ++m)
      h[m] = sigma_c * std::polar(1.0, static_cast<double>(m) * phases[k]);
    instance.estimates.push_back(std::move(h));
  }
  return instance;
}

void generate_chunk(const ChannelInstance& instance, std::size_t count, std::uint64_t seed,
                    std::size_t chunk, const SampleVisitor& visit) {
  const std::size_t begin = chunk * kSampleChunk;
  const std::size_t end = std::min(count, begin + kSampleChunk);
  if (begin >= end) return;

  std::mt19937_64 gen(chunk_seed(seed, chunk));
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto users = instance.estimates.size();
  std::vector<double> scale(users);
  for (std::size_t k = 0; k < users; ++k) scale[k] = std::sqrt(instance.error_vars[k] / 2.0);

  ChannelSample sample;
  sample.realizations = instance.estimates;
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t k = 0; k < users; ++k) {
      auto& h = sample.realizations[k];
      const auto& h_hat = instance.estimates[k];
      for (Eigen::Index m = 0; m < h.size(); ++m) {
        const double re = normal(gen);
        const double im = normal(gen);
        h[m] = h_hat[m] + scale[k] * Complex(re, im);
      }
    }
    visit(i, sample);
  }
}

void for_each_sample(const ChannelInstance& instance, std::size_t count, std::uint64_t seed,
                     const SampleVisitor& visit) {
  for (std::size_t c = 0; c < num_chunks(count); ++c) generate_chunk(instance, count, seed, c, visit);
}

std::vector<ChannelSample> sample_channels(const ChannelInstance& instance, std::size_t count,
                                           std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample count must be at least 1");
  std::vector<ChannelSample> out;
  out.reserve(count);
  for_each_sample(instance, count, seed,
                  [&](std::size_t, const ChannelSample& s) { out.push_back(s); });
  return out;
}

void parallel_chunks(std::size_t count, int workers, const std::function<void(std::size_t)>& work) {
  const std::size_t chunks = num_chunks(count);
  const auto threads = static_cast<std::size_t>(std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(chunks, 1)));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) work(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t c = t; c < chunks; c += threads) work(c);
    });
  }
  for (auto& th : pool) th.join();
}

void to_json(nlohmann::json& j, const ChannelConfig& config) {
  j = nlohmann::json{{"num_tx_antennas", config.num_tx_antennas},
                     {"num_users", config.num_users},
                     {"path_gains", config.path_gains},
                     {"csit_error_vars", config.csit_error_vars},
                     {"noise_var", config.noise_var},
                     {"seed", config.seed}};
  if (config.phases) j["phases"] = *config.phases;
}

void from_json(const nlohmann::json& j, ChannelConfig& config) {
  try {
    config.num_tx_antennas = j.at("num_tx_antennas").get<int>();
    config.num_users = j.at("num_users").get<int>();
    config.path_gains = j.at("path_gains").get<std::vector<double>>();
    config.csit_error_vars = j.at("csit_error_vars").get<std::vector<double>>();
    config.noise_var = j.value("noise_var", 1.0);
    config.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("phases") && !j.at("phases").is_null())
      config.phases = j.at("phases").get<std::vector<double>>();
    else
      config.phases.reset();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("channel config: ") + e.what());
  }
}

}  // namespace rbp
