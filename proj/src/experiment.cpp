#include "robust_precoding/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace rbp {

namespace fs = std::filesystem;

namespace {

struct Stats {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  void merge(const Stats& o) {
    if (o.n == 0.0) return;
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
  }
  McEstimate estimate() const { return {mean, n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0}; }
};

bool is_design_mode(ExperimentMode m) {
  return m == ExperimentMode::power_min || m == ExperimentMode::ammse_min || m == ExperimentMode::ammse_min_ignorant;
}

bool budget_mode(ExperimentMode m) {
  return m == ExperimentMode::ammse_min || m == ExperimentMode::ammse_min_ignorant;
}

std::string file_stem(ExperimentMode mode, std::size_t index) {
  std::ostringstream os;
  os << to_string(mode) << '_' << std::setw(2) << std::setfill('0') << index;
  return os.str();
}

// Runs work(i) for i in [0, count) on up to `workers` threads.
template <class Work>
void run_pool(std::size_t count, int workers, Work work) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) work(i);
    });
  for (auto& th : pool) th.join();
}

int exit_code_of(DesignStatus s) {
  switch (s) {
    case DesignStatus::converged:
    case DesignStatus::max_iterations: return exit_ok;
    case DesignStatus::infeasible_at_target:
    case DesignStatus::budget_infeasible: return exit_infeasible;
    case DesignStatus::numerical_failure: return exit_numerical;
  }
  return exit_other;
}

// Numerical failures dominate infeasibility, which dominates check failures.
int combine(int current, int next) {
  auto rank = [](int c) {
    switch (c) {
      case exit_ok: return 0;
      case exit_check_failed: return 1;
      case exit_infeasible: return 2;
      case exit_numerical: return 3;
      default: return 4;
    }
  };
  return rank(next) > rank(current) ? next : current;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

struct TargetResult {
  SolveReport report;
  // duality_check
  std::optional<FixedAlphaResult> inverse;
  bool check_passed = true;
  std::string error;
  int exit_code = exit_ok;
};

class OutputWriter {
 public:
  explicit OutputWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    files_.push_back(name);
  }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::string plot_script(const ExperimentSpec& spec) {
  std::ostringstream gp;
  gp << "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
  switch (spec.mode) {
    case ExperimentMode::power_min:
      gp << "set xlabel 'AMMSE target'\nset ylabel 'transmit power'\nset logscale y\n"
         << "plot 'summary.csv' using 1:6 with linespoints title 'P_0'\n";
      break;
    case ExperimentMode::ammse_min:
    case ExperimentMode::ammse_min_ignorant:
      gp << "set xlabel 'SNR [dB]'\nset ylabel 'worst-user AMMSE'\nset logscale y\n"
         << "plot 'summary.csv' using 2:10:11 with yerrorlines title 'Monte-Carlo', \\\n"
         << "     'summary.csv' using 2:9 with linespoints title 'Taylor'\n";
      break;
    case ExperimentMode::duality_check:
      gp << "set xlabel 'AMMSE target'\nset ylabel 'recovered t_0'\n"
         << "plot 'summary.csv' using 1:3 with points title 't_0', x with lines title 'identity'\n";
      break;
    case ExperimentMode::moment_check:
      gp << "set xlabel 'case'\nset ylabel 'z score'\nset yrange [-5:5]\n"
         << "plot 'summary.csv' using 1:7 with impulses title 'z', 3 with lines notitle, -3 with lines notitle\n";
      break;
  }
  return gp.str();
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

ExperimentOutcome run_moment_check(const ExperimentSpec& spec, OutputWriter& writer) {
  const auto cases = static_cast<std::size_t>(spec.moment_cases);
  const int sizes[] = {2, 4, 8};
  std::vector<MomentCase> results(cases);
  std::vector<int> dims(cases);
  // Sweep points run sequentially; each case parallelises its sampling instead.
  for (std::size_t i = 0; i < cases; ++i) {
    dims[i] = sizes[i % 3];
    const double s = spec.targets[i % spec.targets.size()];
    auto& c = results[i];
    c.inputs = random_moment_inputs(dims[i], s, spec.algo.mc_seed + 2 * i);
    c.closed_form = quartic_moment(c.inputs);
    c.brute_force = brute_force_quartic(c.inputs, spec.mc_count, spec.algo.mc_seed + 2 * i + 1, spec.workers);
  }

  std::ostringstream csv;
  csv << "case,n,cov_scale,closed_form,mc_mean,mc_std_error,z,within_3se\n";
  std::size_t passed = 0;
  for (std::size_t i = 0; i < cases; ++i) {
    const auto& c = results[i];
    const double z = (c.closed_form - c.brute_force.mean) / c.brute_force.std_error;
    const bool ok = std::abs(z) <= 3.0;
    passed += ok ? 1 : 0;
    csv << i << ',' << dims[i] << ',' << fmt(c.inputs.cov_scale) << ',' << fmt(c.closed_form) << ','
        << fmt(c.brute_force.mean) << ',' << fmt(c.brute_force.std_error) << ',' << fmt(z) << ',' << (ok ? 1 : 0)
        << '\n';
  }
  writer.write("summary.csv", csv.str());

  ExperimentOutcome out;
  const auto required = static_cast<std::size_t>(std::ceil(spec.moment_pass_fraction * static_cast<double>(cases) - 1e-9));
  out.exit_code = passed >= required ? exit_ok : exit_check_failed;
  out.summary = std::to_string(passed) + "/" + std::to_string(cases) + " cases within 3 standard errors (need " +
                std::to_string(required) + ")";
  return out;
}

ExperimentOutcome run_design(const ExperimentSpec& spec, OutputWriter& writer) {
  const ChannelInstance instance = build_instance(spec.channel);
  AlgoConfig algo = spec.algo;
  algo.mc_count = spec.mc_count;
  const std::shared_ptr<const ConicBackend> backend = default_backend(algo.solver);

  std::vector<TargetResult> results(spec.targets.size());
  run_pool(spec.targets.size(), spec.workers, [&](std::size_t i) {
    auto& r = results[i];
    const double target = spec.targets[i];
    try {
      switch (spec.mode) {
        case ExperimentMode::power_min:
          r.report = minimize_power(instance, target, algo, backend);
          break;
        case ExperimentMode::ammse_min:
        case ExperimentMode::ammse_min_ignorant: {
          const double power =
              spec.target_unit == TargetUnit::snr_db ? snr_db_to_power(spec.channel, target) : target;
          r.report = spec.mode == ExperimentMode::ammse_min ? minimize_maxammse(instance, power, algo, backend)
                                                            : minimize_maxammse_ignorant(instance, power, algo, backend);
          break;
        }
        case ExperimentMode::duality_check: {
          AlgoConfig quiet = algo;
          quiet.verify = false;
          r.report = minimize_power(instance, target, quiet, backend);
          if (r.report.final_precoder && r.report.converged) {
            r.inverse = minimize_maxammse_fixed_alpha(instance, r.report.final_objective, r.report.final_alphas, quiet,
                                                      ConstraintModel::aware, backend);
            r.exit_code = exit_code_of(r.inverse->status);
            r.check_passed = r.inverse->status == DesignStatus::converged &&
                             std::abs(r.inverse->t0 - target) <= 2.0 * algo.eps_bisect;
          } else {
            r.check_passed = false;
          }
          break;
        }
        case ExperimentMode::moment_check: break;
      }
      r.exit_code = combine(r.exit_code, exit_code_of(r.report.status));
      if (!r.check_passed) r.exit_code = combine(r.exit_code, exit_check_failed);
    } catch (const ConfigError& e) {
      r.error = e.what();
      r.exit_code = exit_config;
    } catch (const NumericalError& e) {
      r.error = e.what();
      r.exit_code = exit_numerical;
    } catch (const std::exception& e) {
      r.error = e.what();
      r.exit_code = exit_other;
    }
    spdlog::info("{} target {}: {}", to_string(spec.mode), target,
                 r.error.empty() ? to_string(r.report.status) : r.error);
  });

  ExperimentOutcome out;
  std::ostringstream csv;
  if (spec.mode == ExperimentMode::duality_check)
    csv << "target,power,t0,abs_error,solver_calls,within_tolerance,status\n";
  else
    csv << "target,snr_db,status,iterations,final_objective,final_power,worst_user,clamp_events,"
           "worst_taylor_ammse,worst_mc_ammse,worst_mc_std_error,rate_lower_bound\n";

  std::size_t failures = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const double target = spec.targets[i];
    out.exit_code = combine(out.exit_code, r.exit_code);
    if (r.exit_code != exit_ok) ++failures;
    const std::string stem = file_stem(spec.mode, i);

    nlohmann::json doc{{"target", target}, {"report", r.report}};
    if (!r.error.empty()) doc["error"] = r.error;
    if (r.inverse) {
      doc["inverse"] = {{"status", to_string(r.inverse->status)},
                        {"message", r.inverse->message},
                        {"t0", r.inverse->t0},
                        {"power", r.inverse->power},
                        {"midpoints", r.inverse->midpoints},
                        {"solver_calls", r.inverse->solver_calls},
                        {"within_tolerance", r.check_passed}};
    }
    writer.write(stem + ".json", doc.dump(2) + "\n");
    if (!r.report.iterations.empty()) {
      std::ostringstream it;
      write_iterations_csv(it, r.report);
      writer.write(stem + ".iterations.csv", it.str());
    }

    if (spec.mode == ExperimentMode::duality_check) {
      const double t0 = r.inverse ? r.inverse->t0 : std::nan("");
      csv << fmt(target) << ',' << fmt(r.report.final_objective) << ',' << fmt(t0) << ',' << fmt(std::abs(t0 - target))
          << ',' << (r.inverse ? r.inverse->solver_calls : 0) << ',' << (r.check_passed ? 1 : 0) << ','
          << (r.inverse ? to_string(r.inverse->status) : to_string(r.report.status)) << '\n';
      continue;
    }

    const double snr = budget_mode(spec.mode)
                           ? (spec.target_unit == TargetUnit::snr_db ? target : power_to_snr_db(spec.channel, target))
                           : std::nan("");
    const auto& rep = r.report;
    const int worst = rep.worst_user();
    const bool verified = worst >= 0 && spec.algo.verify;
    const double worst_mc = verified ? rep.worst_mc_ammse() : std::nan("");
    const double worst_se = verified ? rep.verification[static_cast<std::size_t>(worst)].mc_std_error : std::nan("");
    const double rate = verified && worst_mc > 0.0 && worst_mc <= 1.0 ? rate_lower_bound(worst_mc) : std::nan("");
    csv << fmt(target) << ',' << fmt(snr) << ',' << (r.error.empty() ? to_string(rep.status) : "error") << ','
        << rep.iterations.size() << ',' << fmt(rep.final_objective) << ',' << fmt(rep.final_power) << ','
        << (worst >= 0 ? worst + 1 : 0) << ',' << rep.clamp_events << ','
        << fmt(rep.verification.empty() ? std::nan("") : rep.worst_taylor_ammse()) << ',' << fmt(worst_mc) << ','
        << fmt(worst_se) << ',' << fmt(rate) << '\n';
  }
  writer.write("summary.csv", csv.str());
  out.summary = std::to_string(results.size() - failures) + "/" + std::to_string(results.size()) + " targets succeeded";
  return out;
}

}  // namespace

const char* to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::power_min: return "power_min";
    case ExperimentMode::ammse_min: return "ammse_min";
    case ExperimentMode::ammse_min_ignorant: return "ammse_min_ignorant";
    case ExperimentMode::duality_check: return "duality_check";
    case ExperimentMode::moment_check: return "moment_check";
  }
  return "unknown";
}

ExperimentMode parse_mode(const std::string& name) {
  for (auto m : {ExperimentMode::power_min, ExperimentMode::ammse_min, ExperimentMode::ammse_min_ignorant,
                 ExperimentMode::duality_check, ExperimentMode::moment_check})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown mode '" + name + "'");
}

void ExperimentSpec::validate() const {
  if (targets.empty()) throw ConfigError("targets must not be empty");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (mode != ExperimentMode::moment_check) {
    channel.validate();
    algo.validate();
  }
  if ((is_design_mode(mode) && algo.verify) || mode == ExperimentMode::moment_check)
    if (mc_count < 100) throw ConfigError("mc_count must be at least 100");
  for (double t : targets) {
    if (!std::isfinite(t)) throw ConfigError("targets must be finite");
    switch (mode) {
      case ExperimentMode::power_min:
      case ExperimentMode::duality_check:
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("AMMSE targets must lie in (0, 1)");
        break;
      case ExperimentMode::ammse_min:
      case ExperimentMode::ammse_min_ignorant:
        if (target_unit == TargetUnit::power && !(t > 0.0)) throw ConfigError("power targets must be positive");
        break;
      case ExperimentMode::moment_check:
        if (!(t > 0.0)) throw ConfigError("moment_check targets are error variances and must be positive");
        break;
    }
  }
  if (mode == ExperimentMode::moment_check) {
    if (moment_cases < 1) throw ConfigError("moment_cases must be at least 1");
    if (!(moment_pass_fraction > 0.0 && moment_pass_fraction <= 1.0))
      throw ConfigError("moment_pass_fraction must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  j = nlohmann::json{{"channel", s.channel},
                     {"mode", to_string(s.mode)},
                     {"targets", s.targets},
                     {"target_unit", s.target_unit == TargetUnit::snr_db ? "snr_db" : "power"},
                     {"mc_count", s.mc_count},
                     {"algo", s.algo},
                     {"output_dir", s.output_dir},
                     {"workers", s.workers}};
  if (s.mode == ExperimentMode::moment_check) {
    j["moment_cases"] = s.moment_cases;
    j["moment_pass_fraction"] = s.moment_pass_fraction;
  }
  j["algo"].erase("mc_count");
}

void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  try {
    s.mode = parse_mode(j.at("mode").get<std::string>());
    const auto defaults = default_experiment(s.mode);
    s.channel = j.contains("channel") ? j.at("channel").get<ChannelConfig>() : defaults.channel;
    s.targets = j.contains("targets") ? j.at("targets").get<std::vector<double>>() : defaults.targets;
    // Default targets come with their own unit; explicit targets default to powers.
    s.target_unit = j.contains("targets") ? TargetUnit::power : defaults.target_unit;
    if (j.contains("target_unit")) {
      const auto unit = j.at("target_unit").get<std::string>();
      if (unit == "power") s.target_unit = TargetUnit::power;
      else if (unit == "snr_db") s.target_unit = TargetUnit::snr_db;
      else throw ConfigError("target_unit must be power or snr_db");
    }
    s.mc_count = j.value("mc_count", defaults.mc_count);
    s.algo = defaults.algo;
    if (j.contains("algo")) from_json(j.at("algo"), s.algo);
    s.output_dir = j.value("output_dir", defaults.output_dir);
    s.workers = j.value("workers", defaults.workers);
    s.moment_cases = j.value("moment_cases", defaults.moment_cases);
    s.moment_pass_fraction = j.value("moment_pass_fraction", defaults.moment_pass_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
}

ChannelConfig default_paper_scenario() {
  ChannelConfig c;
  c.num_tx_antennas = 4;
  c.num_users = 4;
  c.path_gains = {1.0, 1.0, 1.0, 0.5};
  c.csit_error_vars = {0.05, 0.05, 0.05, 0.1};
  c.noise_var = 1.0;
  c.seed = kDefaultPhaseSeed;
  return c;
}

ExperimentSpec default_experiment(ExperimentMode mode) {
  ExperimentSpec s;
  s.mode = mode;
  s.channel = default_paper_scenario();
  s.output_dir = std::string("out/") + to_string(mode);
  switch (mode) {
    case ExperimentMode::power_min:
    case ExperimentMode::duality_check:
      s.targets = {0.25, 0.4};
      break;
    case ExperimentMode::ammse_min:
    case ExperimentMode::ammse_min_ignorant:
      s.targets = {0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0};
      s.target_unit = TargetUnit::snr_db;
      break;
    case ExperimentMode::moment_check:
      s.targets = {0.05, 0.3, 1.0};
      s.mc_count = 1'000'000;
      s.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
      break;
  }
  return s;
}

double average_noise_ratio(const ChannelConfig& config) {
  config.validate();
  double sum = 0.0;
  for (double g : config.path_gains) sum += config.noise_var / g;
  return sum / static_cast<double>(config.num_users);
}

double snr_db_to_power(const ChannelConfig& config, double snr_db) {
  return static_cast<double>(config.num_users) * average_noise_ratio(config) * std::pow(10.0, snr_db / 10.0);
}

double power_to_snr_db(const ChannelConfig& config, double power) {
  if (!(power > 0.0)) throw ConfigError("power must be positive");
  return 10.0 * std::log10(power / (static_cast<double>(config.num_users) * average_noise_ratio(config)));
}

int least_fortunate_user(const ChannelConfig& config) {
  config.validate();
  int worst = 0;
  for (int k = 1; k < config.num_users; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const auto w = static_cast<std::size_t>(worst);
    if (config.path_gains[i] < config.path_gains[w] ||
        (config.path_gains[i] == config.path_gains[w] && config.csit_error_vars[i] > config.csit_error_vars[w]))
      worst = k;
  }
  return worst + 1;
}

MomentInputs random_moment_inputs(int n, double cov_scale, std::uint64_t seed) {
  if (n < 1) throw ConfigError("dimension must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  auto gaussian = [&](int rows, int cols) {
    CMatrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = Complex(normal(gen), normal(gen));
    return m;
  };
  MomentInputs in;
  const CMatrix ga = gaussian(n, n);
  const CMatrix gb = gaussian(n, n);
  in.a = ga * ga.adjoint() / static_cast<double>(n);
  in.b = gb * gb.adjoint() / static_cast<double>(n);
  in.mean = gaussian(n, 1).col(0);
  in.cov_scale = cov_scale;
  return in;
}

McEstimate brute_force_quartic(const MomentInputs& inputs, std::size_t count, std::uint64_t seed, int workers) {
  if (count < 2) throw ConfigError("Monte-Carlo count must be at least 2");
  ChannelInstance carrier;
  carrier.estimates = {inputs.mean};
  carrier.error_vars = {inputs.cov_scale};
  std::vector<Stats> per_chunk(num_chunks(count));
  parallel_chunks(count, workers, [&](std::size_t chunk) {
    generate_chunk(carrier, count, seed, chunk, [&](std::size_t, const ChannelSample& s) {
      const auto& x = s.realizations.front();
      const double q1 = x.dot(inputs.a * x).real();
      const double q2 = x.dot(inputs.b * x).real();
      per_chunk[chunk].add(q1 * q2);
    });
  });
  Stats total;
  for (const auto& s : per_chunk) total.merge(s);
  return total.estimate();
}

ExperimentOutcome run(const ExperimentSpec& spec) {
  spec.validate();
  OutputWriter writer(spec.output_dir);
  const auto started = timestamp_utc();

  ExperimentOutcome out = spec.mode == ExperimentMode::moment_check ? run_moment_check(spec, writer)
                                                                     : run_design(spec, writer);
  writer.write("plot.gp", plot_script(spec));

  nlohmann::json manifest{{"tool", "rpdesign"},
                          {"version", kToolVersion},
                          {"started", started},
                          {"finished", timestamp_utc()},
                          {"mode", to_string(spec.mode)},
                          {"spec", spec},
                          {"seeds", {{"phase_seed", spec.channel.seed}, {"mc_seed", spec.algo.mc_seed}}},
                          {"exit_code", out.exit_code},
                          {"summary", out.summary}};
  if (spec.mode != ExperimentMode::moment_check) {
    const auto phases = spec.channel.phases ? *spec.channel.phases
                                            : draw_phases(spec.channel.num_users, spec.channel.seed);
    manifest["phases"] = phases;
    manifest["least_fortunate_user"] = least_fortunate_user(spec.channel);
    manifest["average_noise_ratio"] = average_noise_ratio(spec.channel);
  }
  auto files = writer.files();
  files.push_back("manifest.json");
  manifest["files"] = files;
  writer.write("manifest.json", manifest.dump(2) + "\n");
  out.files = writer.files();
  return out;
}

}  // namespace rbp
