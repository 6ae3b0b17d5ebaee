#include <doctest.h>

#include <cmath>
#include <numbers>

#include "robust_precoding/ammse.hpp"
#include "robust_precoding/channel_model.hpp"
#include "robust_precoding/experiment.hpp"

using namespace rbp;

namespace {

ChannelConfig small_config() {
  ChannelConfig c;
  c.num_tx_antennas = 3;
  c.num_users = 2;
  c.path_gains = {1.0, 0.5};
  c.csit_error_vars = {0.1, 0.2};
  c.noise_var = 1.0;
  c.phases = std::vector<double>{0.3, 2.0};
  return c;
}

}  // namespace

TEST_CASE("config validation rejects inconsistent scenarios") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());

  auto bad = c;
  bad.csit_error_vars[1] = 0.6;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.path_gains.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.noise_var = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.num_tx_antennas = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = c;
  bad.csit_error_vars[0] = -1e-3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("estimates follow the steering-vector model") {
  const auto c = small_config();
  const auto inst = build_instance(c);
  REQUIRE(inst.num_users() == 2);
  REQUIRE(inst.num_antennas() == 3);
  for (int k = 0; k < 2; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double sigma_c = std::sqrt(c.path_gains[i] - c.csit_error_vars[i]);
    for (int m = 0; m < 3; ++m) {
      const Complex expected = sigma_c * Complex(std::cos(m * (*c.phases)[i]), std::sin(m * (*c.phases)[i]));
      CHECK(std::abs(inst.estimates[i][m] - expected) < 1e-15);
    }
    CHECK(inst.estimates[i].squaredNorm() == doctest::Approx(3 * (c.path_gains[i] - c.csit_error_vars[i])));
  }
  const CMatrix r = inst.channel_correlation(1);
  CHECK(std::abs(r(0, 0).real() - (0.3 + 0.2)) < 1e-14);
}

TEST_CASE("zero error variance makes every realization equal the estimate") {
  auto c = small_config();
  c.csit_error_vars = {0.0, 0.0};
  const auto inst = build_instance(c);
  for (const auto& s : sample_channels(inst, 10, 5))
    for (int k = 0; k < 2; ++k) CHECK((s.realizations[static_cast<std::size_t>(k)] - inst.estimates[static_cast<std::size_t>(k)]).norm() == 0.0);
}

TEST_CASE("phases are uniform draws in [0, 2pi) and deterministic") {
  const auto a = draw_phases(1000, 11);
  const auto b = draw_phases(1000, 11);
  CHECK(a == b);
  double mean = 0.0;
  for (double phi : a) {
    CHECK(phi >= 0.0);
    CHECK(phi < 2.0 * std::numbers::pi);
    mean += phi / 1000.0;
  }
  // Uniform mean pi, standard deviation of the sample mean pi / sqrt(3 * 1000).
  CHECK(std::abs(mean - std::numbers::pi) < 4.0 * std::numbers::pi / std::sqrt(3000.0));
  CHECK(draw_phases(4, 12) != draw_phases(4, 11));

  const auto cfg = with_random_phases(small_config(), 11);
  REQUIRE(cfg.phases);
  CHECK((*cfg.phases)[0] == a[0]);
}

TEST_CASE("the default scenario uses its documented phase seed") {
  const auto c = default_paper_scenario();
  CHECK(!c.phases);
  CHECK(c.seed == kDefaultPhaseSeed);
  CHECK(c.csit_error_vars[3] == 0.1);
  CHECK(c.path_gains[3] == 0.5);
  CHECK(c.noise_var == 1.0);
}

TEST_CASE("sampling is deterministic and independent of the worker count") {
  const auto inst = build_instance(small_config());
  const auto a = sample_channels(inst, 3000, 42);
  const auto b = sample_channels(inst, 3000, 42);
  REQUIRE(a.size() == 3000);
  for (std::size_t i = 0; i < a.size(); i += 97) CHECK(a[i].realizations[1] == b[i].realizations[1]);

  // A prefix of a longer run is the same sample sequence.
  const auto prefix = sample_channels(inst, 1500, 42);
  CHECK(prefix[1499].realizations[0] == a[1499].realizations[0]);

  const Precoder p(CMatrix::Identity(3, 2) * Complex(0.7, 0.2));
  const auto one = mc_ammse_all(inst, p, 5000, 9, 1);
  const auto four = mc_ammse_all(inst, p, 5000, 9, 4);
  const auto seven = mc_ammse_all(inst, p, 5000, 9, 7);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(one[k].mean == four[k].mean);
    CHECK(one[k].std_error == four[k].std_error);
    CHECK(one[k].mean == seven[k].mean);
  }
  CHECK_THROWS_AS(sample_channels(inst, 0, 1), ConfigError);
}

TEST_CASE("sampled errors are circularly symmetric with the configured variance") {
  const auto inst = build_instance(small_config());
  const std::size_t n = 40000;
  double var = 0.0;
  Complex pseudo = 0.0;
  Complex mean = 0.0;
  for_each_sample(inst, n, 3, [&](std::size_t, const ChannelSample& s) {
    const Complex e = s.realizations[1][2] - inst.estimates[1][2];
    var += std::norm(e);
    pseudo += e * e;
    mean += e;
  });
  var /= static_cast<double>(n);
  pseudo /= static_cast<double>(n);
  mean /= static_cast<double>(n);
  // |e|^2 is exponential with mean 0.2, so its sample mean has std 0.2 / sqrt(n).
  CHECK(std::abs(var - 0.2) < 5.0 * 0.2 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(pseudo) < 5.0 * 0.2 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(mean) < 5.0 * std::sqrt(0.2 / static_cast<double>(n)));
}

TEST_CASE("channel config JSON round trip") {
  const auto c = small_config();
  const nlohmann::json j = c;
  const auto back = j.get<ChannelConfig>();
  CHECK(back.path_gains == c.path_gains);
  CHECK(back.csit_error_vars == c.csit_error_vars);
  CHECK(back.phases == c.phases);
  CHECK(back.num_tx_antennas == 3);

  nlohmann::json missing = j;
  missing.erase("path_gains");
  CHECK_THROWS_AS(missing.get<ChannelConfig>(), ConfigError);
}
