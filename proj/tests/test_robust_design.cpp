#include <doctest.h>

#include <cmath>
#include <sstream>

#include "robust_precoding/experiment.hpp"
#include "robust_precoding/robust_design.hpp"

using namespace rbp;

namespace {

ChannelInstance single_user(int nt, double noise) {
  ChannelInstance inst;
  CVector h(nt);
  for (int m = 0; m < nt; ++m) h[m] = std::polar(1.0, 0.7 * m * m);
  inst.estimates = {h};
  inst.error_vars = {0.0};
  inst.noise_var = noise;
  return inst;
}

AlgoConfig quick() {
  AlgoConfig c;
  c.mc_count = 500;
  return c;
}

const ChannelInstance& scenario() {
  static const ChannelInstance inst = build_instance(default_paper_scenario());
  return inst;
}

}  // namespace

TEST_CASE("algorithm config validation and JSON") {
  AlgoConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.eps_power = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.n_max = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.alpha_lo = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.alpha_hi = 0.9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.eps_t = 3e-3;
  c.alpha_source = AlphaSource::rank_one;
  c.alpha_lo = 0.1;
  const nlohmann::json j = c;
  const auto back = j.get<AlgoConfig>();
  CHECK(back.eps_t == 3e-3);
  CHECK(back.alpha_source == AlphaSource::rank_one);
  CHECK(back.alpha_lo == 0.1);
  const nlohmann::json unknown{{"alpha_source", "other"}};
  CHECK_THROWS_AS(unknown.get<AlgoConfig>(), ConfigError);
}

TEST_CASE("single-user power minimisation matches the analytic power") {
  const auto inst = single_user(3, 0.9);
  for (double eps : {0.1, 0.25, 0.5, 0.9}) {
    const auto r = minimize_power(inst, eps, quick());
    REQUIRE(r.converged);
    const double oracle = 0.9 * (1.0 - eps) / (eps * inst.estimates[0].squaredNorm());
    CHECK(r.final_objective == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(r.final_power == doctest::Approx(oracle).epsilon(1e-6));
    // Without estimation error the recursion is idle: one confirming iteration.
    CHECK(r.iterations.size() == 2);
    for (double a : r.iterations.back().alphas_out) CHECK(a == doctest::Approx(1.0).epsilon(1e-12));
    // The Monte-Carlo check is exact when the channel is known.
    CHECK(r.verification[0].mc_ammse == doctest::Approx(eps).epsilon(1e-6));
  }
  CHECK_THROWS_AS(minimize_power(inst, 1.0, quick()), ConfigError);
  CHECK_THROWS_AS(minimize_power(inst, 0.0, quick()), ConfigError);
}

TEST_CASE("bisection mechanics") {
  const auto inst = single_user(2, 1.0);
  auto c = quick();
  c.eps_bisect = 0.5;
  const auto one = minimize_maxammse_fixed_alpha(inst, 1.0, {1.0}, c);
  REQUIRE(one.midpoints.size() == 1);
  CHECK(one.midpoints[0] == 0.5);
  CHECK(one.solver_calls == 1);

  c.eps_bisect = 1e-3;
  const auto many = minimize_maxammse_fixed_alpha(inst, 1.0, {1.0}, c);
  CHECK(many.solver_calls == 10);  // ceil(log2(1000))
  CHECK(many.status == DesignStatus::converged);
  CHECK_THROWS_AS(minimize_maxammse_fixed_alpha(inst, 0.0, {1.0}, c), ConfigError);
}

TEST_CASE("single-user budget problem matches the analytic AMMSE") {
  for (int nt : {1, 2, 4}) {
    const auto inst = single_user(nt, 1.0);
    for (double budget : {0.3, 2.0, 10.0}) {
      const auto r = minimize_maxammse_fixed_alpha(inst, budget, {1.0}, quick());
      REQUIRE(r.status == DesignStatus::converged);
      const double oracle = 1.0 / (nt * budget + 1.0);
      CHECK(std::abs(r.t0 - oracle) <= 1e-4);
      CHECK(r.t0 >= oracle - 1e-9);
      CHECK(r.power <= budget);
    }
  }
}

TEST_CASE("a budget too small for any target is reported") {
  const auto inst = single_user(1, 1.0);
  const auto r = minimize_maxammse_fixed_alpha(inst, 1e-6, {1.0}, quick());
  CHECK(r.status == DesignStatus::budget_infeasible);
  CHECK(!r.extraction);
  const auto full = minimize_maxammse(inst, 1e-6, quick());
  CHECK(full.status == DesignStatus::budget_infeasible);
  CHECK(!full.final_precoder);
}

TEST_CASE("targets below the feasibility floor") {
  const auto r = minimize_power(scenario(), 0.01, quick());
  CHECK(r.status == DesignStatus::infeasible_at_target);
  CHECK(r.iterations.empty());
  CHECK(!r.converged);
}

TEST_CASE("power minimisation on the default scenario") {
  const auto r = minimize_power(scenario(), 0.4, quick());
  REQUIRE(r.converged);
  CHECK(r.iterations.size() <= 10);
  // The first iteration is the first-order design.
  for (double a : r.iterations.front().alphas_in) CHECK(a == 1.0);
  const auto n = r.iterations.size();
  CHECK(std::abs(r.iterations[n - 1].objective - r.iterations[n - 2].objective) < 1e-4);
  CHECK(r.final_alphas == r.iterations.back().alphas_in);
  // Second-order AMMSE of the final precoder sits on the target.
  for (const auto& v : r.verification) CHECK(v.taylor_ammse == doctest::Approx(0.4).epsilon(1e-5));
  CHECK(r.worst_user() >= 0);

  auto capped = quick();
  capped.n_max = 1;
  const auto one = minimize_power(scenario(), 0.4, capped);
  CHECK(one.status == DesignStatus::max_iterations);
  CHECK(one.iterations.size() == 1);
  CHECK(one.final_precoder);
}

TEST_CASE("alpha clamping is recorded") {
  auto c = quick();
  c.alpha_lo = 0.999;
  const auto r = minimize_power(scenario(), 0.4, c);
  REQUIRE(!r.iterations.empty());
  CHECK(r.clamp_events > 0);
  const auto& it = r.iterations.front();
  for (std::size_t k = 0; k < it.alphas_raw.size(); ++k) {
    if (it.clamped[k]) {
      CHECK(it.alphas_raw[k] < 0.999);
      CHECK(it.alphas_out[k] == 0.999);
    } else {
      CHECK(it.alphas_out[k] == it.alphas_raw[k]);
    }
  }
}

TEST_CASE("rank-one alpha source converges to the same design") {
  auto c = quick();
  c.alpha_source = AlphaSource::rank_one;
  const auto a = minimize_power(scenario(), 0.3, quick());
  const auto b = minimize_power(scenario(), 0.3, c);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(b.final_objective == doctest::Approx(a.final_objective).epsilon(1e-5));
}

TEST_CASE("max-AMMSE design and its stop rule") {
  const double budget = snr_db_to_power(default_paper_scenario(), 10.0);
  const auto r = minimize_maxammse(scenario(), budget, quick());
  REQUIRE(r.converged);
  const auto n = r.iterations.size();
  REQUIRE(n >= 2);
  CHECK(std::abs(r.iterations[n - 1].objective - r.iterations[n - 2].objective) < quick().eps_t);
  CHECK(r.final_power <= budget * (1.0 + 1e-6));
  CHECK(r.final_objective == r.iterations.back().objective);

  // Duality at frozen alphas: the budget problem recovers the power problem's target.
  const auto forward = minimize_power(scenario(), 0.3, quick());
  REQUIRE(forward.converged);
  const auto inverse = minimize_maxammse_fixed_alpha(scenario(), forward.final_objective, forward.final_alphas, quick());
  CHECK(std::abs(inverse.t0 - 0.3) <= 2e-4);
}

TEST_CASE("without estimation error the ignorant design equals the aware one") {
  auto cfg = default_paper_scenario();
  cfg.csit_error_vars = {0.0, 0.0, 0.0, 0.0};
  const auto inst = build_instance(cfg);
  const auto aware = minimize_maxammse(inst, 20.0, quick());
  const auto ignorant = minimize_maxammse_ignorant(inst, 20.0, quick());
  REQUIRE(aware.converged);
  REQUIRE(ignorant.converged);
  CHECK(aware.iterations.size() == 2);
  CHECK(ignorant.iterations.size() == 1);
  CHECK(aware.final_objective == doctest::Approx(ignorant.final_objective).epsilon(1e-9));
}

TEST_CASE("reports are deterministic and serialise") {
  const auto a = minimize_power(scenario(), 0.35, quick());
  const auto b = minimize_power(scenario(), 0.35, quick());
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    CHECK(a.iterations[i].objective == b.iterations[i].objective);
    CHECK(a.iterations[i].alphas_out == b.iterations[i].alphas_out);
  }
  for (std::size_t k = 0; k < a.verification.size(); ++k)
    CHECK(a.verification[k].mc_ammse == b.verification[k].mc_ammse);

  const nlohmann::json j = a;
  CHECK(j.at("status") == "converged");
  CHECK(j.at("iterations").size() == a.iterations.size());
  CHECK(j.at("final_precoder").size() == 4);
  CHECK(j.at("verification").at(3).contains("mc_std_error"));

  std::ostringstream csv;
  write_iterations_csv(csv, a);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "n,objective,max_abs_delta_alpha,worst_eigen_ratio");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == a.iterations.size());
}
