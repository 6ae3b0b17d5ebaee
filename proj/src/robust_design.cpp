#include "robust_precoding/robust_design.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

namespace rbp {

namespace {

using Clock = std::chrono::steady_clock;

std::shared_ptr<const ConicBackend> backend_or_default(std::shared_ptr<const ConicBackend> backend,
                                                       const AlgoConfig& config) {
  return backend ? std::move(backend) : default_backend(config.solver);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Alpha recursion step. Undefined alphas (R_bar = 0) keep their previous value.
void update_alphas(const ChannelInstance& instance, const GramSet& gram, const AlgoConfig& config,
                   IterationRecord& rec, int& clamp_events) {
  const int users = instance.num_users();
  rec.alphas_out.resize(static_cast<std::size_t>(users));
  rec.alphas_raw.resize(static_cast<std::size_t>(users));
  rec.clamped.assign(static_cast<std::size_t>(users), false);
  for (int k = 0; k < users; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    const auto breakdown = ammse_breakdown(instance, gram, k);
    if (!breakdown.alpha) {
      rec.alphas_raw[idx] = std::numeric_limits<double>::quiet_NaN();
      rec.alphas_out[idx] = rec.alphas_in[idx];
      spdlog::debug("alpha of user {} undefined (R_bar = 0); keeping {}", k + 1, rec.alphas_in[idx]);
      continue;
    }
    const double raw = *breakdown.alpha;
    const double clamped = std::clamp(raw, config.alpha_lo, config.alpha_hi);
    rec.alphas_raw[idx] = raw;
    rec.alphas_out[idx] = clamped;
    if (clamped != raw) {
      rec.clamped[idx] = true;
      ++clamp_events;
      spdlog::debug("iteration {}: alpha of user {} clamped from {} to {}", rec.n, k + 1, raw, clamped);
    }
  }
}

const GramSet& alpha_gram(const ExtractionReport& ex, const AlgoConfig& config, GramSet& storage) {
  if (config.alpha_source == AlphaSource::relaxed_gram) return ex.relaxed;
  storage = GramSet::from_precoder(ex.precoder);
  return storage;
}

void verify(SolveReport& report, const ChannelInstance& instance, const AlgoConfig& config) {
  if (!report.final_precoder) return;
  const auto& p = *report.final_precoder;
  const int users = instance.num_users();
  report.final_power = p.total_power();
  report.verification.assign(static_cast<std::size_t>(users), {});
  std::vector<McEstimate> mc;
  if (config.verify) {
    if (report.model == ConstraintModel::aware) {
      mc = mc_ammse_all(instance, p, config.mc_count, config.mc_seed, config.mc_workers);
    } else {
      std::vector<Complex> receivers;
      for (int k = 0; k < users; ++k) receivers.push_back(ignorant_receiver_gain(instance, p, k));
      mc = mc_fixed_receiver_mse_all(instance, p, receivers, config.mc_count, config.mc_seed, config.mc_workers);
    }
  }
  for (int k = 0; k < users; ++k) {
    auto& v = report.verification[static_cast<std::size_t>(k)];
    const auto b = ammse_breakdown(instance, p, k);
    v.first_order = b.value_order1;
    v.taylor_ammse = b.value_order2;
    v.ignorant_ammse = ignorant_ammse(instance, p, k);
    if (config.verify) {
      v.mc_ammse = mc[static_cast<std::size_t>(k)].mean;
      v.mc_std_error = mc[static_cast<std::size_t>(k)].std_error;
    }
  }
}

DesignStatus status_from_solver(SolveStatus s) {
  return s == SolveStatus::infeasible ? DesignStatus::infeasible_at_target : DesignStatus::numerical_failure;
}

}  // namespace

void AlgoConfig::validate() const {
  if (!(eps_power > 0.0) || !(eps_t > 0.0) || !(eps_bisect > 0.0)) throw ConfigError("tolerances must be positive");
  if (eps_bisect >= 1.0) throw ConfigError("bisection tolerance must be below 1");
  if (n_max < 1) throw ConfigError("n_max must be at least 1");
  if (!(alpha_lo > 0.0 && alpha_lo <= 1.0 && alpha_hi >= 1.0))
    throw ConfigError("alpha clamp must satisfy 0 < lo <= 1 <= hi");
  if (verify && mc_count < 2) throw ConfigError("mc_count must be at least 2");
}

const char* to_string(DesignStatus status) {
  switch (status) {
    case DesignStatus::converged: return "converged";
    case DesignStatus::max_iterations: return "max_iterations";
    case DesignStatus::infeasible_at_target: return "infeasible_at_target";
    case DesignStatus::budget_infeasible: return "budget_infeasible";
    case DesignStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

double SolveReport::worst_taylor_ammse() const {
  double w = 0.0;
  for (const auto& v : verification) w = std::max(w, v.taylor_ammse);
  return w;
}

double SolveReport::worst_mc_ammse() const {
  double w = 0.0;
  for (const auto& v : verification) w = std::max(w, v.mc_ammse);
  return w;
}

int SolveReport::worst_user() const {
  int best = -1;
  double w = -1.0;
  for (std::size_t k = 0; k < verification.size(); ++k)
    if (verification[k].mc_ammse > w) {
      w = verification[k].mc_ammse;
      best = static_cast<int>(k);
    }
  return best;
}

SolveReport minimize_power(const ChannelInstance& instance, double eps_target, const AlgoConfig& config,
                           std::shared_ptr<const ConicBackend> backend) {
  config.validate();
  instance.validate();
  if (!(eps_target > 0.0 && eps_target < 1.0)) throw ConfigError("AMMSE target must lie in (0, 1)");
  backend = backend_or_default(std::move(backend), config);

  SolveReport report;
  report.algorithm = "power_min";
  const auto users = static_cast<std::size_t>(instance.num_users());
  std::vector<double> alphas(users, 1.0);
  double previous = 0.0;

  for (int n = 1; n <= config.n_max; ++n) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.n = n;
    rec.alphas_in = alphas;

    const PlrSpec spec{instance, eps_target, alphas, ConstraintModel::aware};
    const auto sol = backend->solve(build_plr(spec));
    rec.solver_calls = 1;
    if (sol.status != SolveStatus::optimal) {
      report.status = status_from_solver(sol.status);
      report.message = std::string("P_lr at iteration ") + std::to_string(n) + ": " + to_string(sol.status) +
                       (sol.stats.detail.empty() ? "" : " (" + sol.stats.detail + ")");
      if (n == 1 && sol.status == SolveStatus::infeasible)
        report.message += "; target below the feasibility floor";
      break;
    }

    const auto ex = extract_precoder(sol, spec, backend->settings());
    rec.objective = sol.objective_value;
    rec.eigen_ratios = ex.eigen_ratios;
    rec.violations = plr_violations(spec, ex.relaxed);
    GramSet storage;
    int clamp_events = report.clamp_events;
    update_alphas(instance, alpha_gram(ex, config, storage), config, rec, clamp_events);
    report.clamp_events = clamp_events;
    rec.wall_time = seconds_since(start);

    report.final_precoder = ex.precoder;
    report.final_objective = sol.objective_value;
    report.final_alphas = alphas;
    report.feasible_after_extraction = ex.feasible_after_extraction;
    report.iterations.push_back(rec);

    alphas = rec.alphas_out;
    if (std::abs(sol.objective_value - previous) < config.eps_power) {
      report.status = DesignStatus::converged;
      report.converged = true;
      break;
    }
    previous = sol.objective_value;
    if (n == config.n_max) {
      report.status = DesignStatus::max_iterations;
      report.message = "n_max reached";
    }
  }
  verify(report, instance, config);
  return report;
}

FixedAlphaResult minimize_maxammse_fixed_alpha(const ChannelInstance& instance, double power_budget,
                                               const std::vector<double>& alphas, const AlgoConfig& config,
                                               ConstraintModel model, std::shared_ptr<const ConicBackend> backend) {
  config.validate();
  instance.validate();
  if (!(power_budget > 0.0)) throw ConfigError("power budget must be positive");
  backend = backend_or_default(std::move(backend), config);

  FixedAlphaResult result;
  PlrSpec spec{instance, 0.5, alphas, model};
  double lo = 0.0;
  double hi = 1.0;
  std::optional<ConicSolution> best;
  PlrSpec best_spec = spec;

  while (hi - lo > config.eps_bisect) {
    spec.epsilon_target = 0.5 * (lo + hi);
    result.midpoints.push_back(spec.epsilon_target);
    auto sol = backend->solve(build_plr(spec));
    ++result.solver_calls;
    if (sol.status == SolveStatus::optimal) {
      if (sol.objective_value > power_budget) {
        lo = spec.epsilon_target;
      } else {
        hi = spec.epsilon_target;
        best = std::move(sol);
        best_spec = spec;
      }
    } else if (sol.status == SolveStatus::infeasible) {
      lo = spec.epsilon_target;
    } else {
      result.status = DesignStatus::numerical_failure;
      result.message = std::string("P_lr at target ") + std::to_string(spec.epsilon_target) + ": " +
                       to_string(sol.status) + " (" + sol.stats.detail + ")";
      return result;
    }
  }

  if (!best) {
    result.status = DesignStatus::budget_infeasible;
    result.message = "no AMMSE target below " + std::to_string(hi) + " is achievable within the power budget";
    return result;
  }
  result.status = DesignStatus::converged;
  result.t0 = hi;
  result.power = best->objective_value;
  result.extraction = extract_precoder(*best, best_spec, backend->settings());
  return result;
}

namespace {

SolveReport maxammse_loop(const ChannelInstance& instance, double power_budget, const AlgoConfig& config,
                          ConstraintModel model, std::shared_ptr<const ConicBackend> backend) {
  config.validate();
  backend = backend_or_default(std::move(backend), config);

  SolveReport report;
  report.algorithm = model == ConstraintModel::aware ? "ammse_min" : "ammse_min_ignorant";
  report.model = model;
  const auto users = static_cast<std::size_t>(instance.num_users());
  std::vector<double> alphas(users, 1.0);
  double previous = 0.0;
  const int n_max = model == ConstraintModel::aware ? config.n_max : 1;

  for (int n = 1; n <= n_max; ++n) {
    const auto start = Clock::now();
    IterationRecord rec;
    rec.n = n;
    rec.alphas_in = alphas;

    const auto fixed = minimize_maxammse_fixed_alpha(instance, power_budget, alphas, config, model, backend);
    rec.solver_calls = fixed.solver_calls;
    if (fixed.status != DesignStatus::converged) {
      report.status = fixed.status;
      report.message = "iteration " + std::to_string(n) + ": " + fixed.message;
      break;
    }
    const auto& ex = *fixed.extraction;
    const PlrSpec spec{instance, fixed.t0, alphas, model};
    rec.objective = fixed.t0;
    rec.eigen_ratios = ex.eigen_ratios;
    rec.violations = plr_violations(spec, ex.relaxed);
    if (model == ConstraintModel::aware) {
      GramSet storage;
      int clamp_events = report.clamp_events;
      update_alphas(instance, alpha_gram(ex, config, storage), config, rec, clamp_events);
      report.clamp_events = clamp_events;
    } else {
      rec.alphas_out = alphas;
    }
    rec.wall_time = seconds_since(start);

    report.final_precoder = ex.precoder;
    report.final_objective = fixed.t0;
    report.final_alphas = alphas;
    report.feasible_after_extraction = ex.feasible_after_extraction;
    report.iterations.push_back(rec);

    alphas = rec.alphas_out;
    if (model == ConstraintModel::ignorant || std::abs(fixed.t0 - previous) < config.eps_t) {
      report.status = DesignStatus::converged;
      report.converged = true;
      break;
    }
    previous = fixed.t0;
    if (n == n_max) {
      report.status = DesignStatus::max_iterations;
      report.message = "n_max reached";
    }
  }
  verify(report, instance, config);
  return report;
}

}  // namespace

SolveReport minimize_maxammse(const ChannelInstance& instance, double power_budget, const AlgoConfig& config,
                              std::shared_ptr<const ConicBackend> backend) {
  return maxammse_loop(instance, power_budget, config, ConstraintModel::aware, std::move(backend));
}

SolveReport minimize_maxammse_ignorant(const ChannelInstance& instance, double power_budget, const AlgoConfig& config,
                                       std::shared_ptr<const ConicBackend> backend) {
  return maxammse_loop(instance, power_budget, config, ConstraintModel::ignorant, std::move(backend));
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
  auto nullable = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  j = nlohmann::json{{"n", r.n},
                     {"objective", r.objective},
                     {"alphas_in", r.alphas_in},
                     {"alphas_out", r.alphas_out},
                     {"alphas_raw", nullable(r.alphas_raw)},
                     {"clamped", r.clamped},
                     {"eigen_ratios", r.eigen_ratios},
                     {"violations", r.violations},
                     {"solver_calls", r.solver_calls},
                     {"wall_time", r.wall_time}};
}

void to_json(nlohmann::json& j, const UserVerification& v) {
  j = nlohmann::json{{"first_order", v.first_order},
                     {"taylor_ammse", v.taylor_ammse},
                     {"ignorant_ammse", v.ignorant_ammse},
                     {"mc_ammse", v.mc_ammse},
                     {"mc_std_error", v.mc_std_error}};
}

void to_json(nlohmann::json& j, const SolveReport& r) {
  j = nlohmann::json{{"algorithm", r.algorithm},
                     {"receivers", r.model == ConstraintModel::aware ? "mmse" : "forwarded"},
                     {"status", to_string(r.status)},
                     {"message", r.message},
                     {"converged", r.converged},
                     {"final_objective", r.final_objective},
                     {"final_power", r.final_power},
                     {"final_alphas", r.final_alphas},
                     {"feasible_after_extraction", r.feasible_after_extraction},
                     {"clamp_events", r.clamp_events},
                     {"iterations", r.iterations},
                     {"verification", r.verification}};
  if (r.final_precoder) {
    nlohmann::json beams = nlohmann::json::array();
    for (int k = 0; k < r.final_precoder->num_users(); ++k) {
      nlohmann::json beam = nlohmann::json::array();
      for (const auto& z : r.final_precoder->beam(k)) beam.push_back({z.real(), z.imag()});
      beams.push_back(beam);
    }
    j["final_precoder"] = beams;
  } else {
    j["final_precoder"] = nullptr;
  }
}

void to_json(nlohmann::json& j, const AlgoConfig& c) {
  j = nlohmann::json{{"eps_power", c.eps_power},
                     {"eps_t", c.eps_t},
                     {"eps_bisect", c.eps_bisect},
                     {"n_max", c.n_max},
                     {"alpha_clamp", {c.alpha_lo, c.alpha_hi}},
                     {"alpha_source", c.alpha_source == AlphaSource::relaxed_gram ? "relaxed_gram" : "rank_one"},
                     {"verify", c.verify},
                     {"mc_count", c.mc_count},
                     {"mc_seed", c.mc_seed},
                     {"mc_workers", c.mc_workers}};
}

void from_json(const nlohmann::json& j, AlgoConfig& c) {
  try {
    c.eps_power = j.value("eps_power", c.eps_power);
    c.eps_t = j.value("eps_t", c.eps_t);
    c.eps_bisect = j.value("eps_bisect", c.eps_bisect);
    c.n_max = j.value("n_max", c.n_max);
    if (j.contains("alpha_clamp")) {
      const auto clamp = j.at("alpha_clamp").get<std::vector<double>>();
      if (clamp.size() != 2) throw ConfigError("alpha_clamp must be [lo, hi]");
      c.alpha_lo = clamp[0];
      c.alpha_hi = clamp[1];
    }
    if (j.contains("alpha_source")) {
      const auto s = j.at("alpha_source").get<std::string>();
      if (s == "relaxed_gram") c.alpha_source = AlphaSource::relaxed_gram;
      else if (s == "rank_one") c.alpha_source = AlphaSource::rank_one;
      else throw ConfigError("alpha_source must be relaxed_gram or rank_one");
    }
    c.verify = j.value("verify", c.verify);
    c.mc_count = j.value("mc_count", c.mc_count);
    c.mc_seed = j.value("mc_seed", c.mc_seed);
    c.mc_workers = j.value("mc_workers", c.mc_workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("algorithm config: ") + e.what());
  }
}

void write_iterations_csv(std::ostream& os, const SolveReport& report) {
  std::ostringstream buf;
  buf << std::setprecision(12);
  buf << "n,objective,max_abs_delta_alpha,worst_eigen_ratio\n";
  for (const auto& r : report.iterations) {
    double delta = 0.0;
    for (std::size_t k = 0; k < r.alphas_in.size() && k < r.alphas_out.size(); ++k)
      delta = std::max(delta, std::abs(r.alphas_out[k] - r.alphas_in[k]));
    const double worst = r.eigen_ratios.empty() ? 0.0 : *std::max_element(r.eigen_ratios.begin(), r.eigen_ratios.end());
    buf << r.n << ',' << r.objective << ',' << delta << ',' << worst << '\n';
  }
  os << buf.str();
}

}  // namespace rbp
