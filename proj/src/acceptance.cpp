#include "robust_precoding/acceptance.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "robust_precoding/experiment.hpp"
#include "robust_precoding/robust_design.hpp"

namespace rbp::acceptance {

namespace {

using Clock = std::chrono::steady_clock;

struct Mean {
  double mean = 0.0;
  double se = 0.0;
};

class Accumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  Mean result() const {
    return {mean_, n_ > 1 ? std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_)) : 0.0};
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Independent Monte-Carlo oracle: draws h_k = h_hat_k + e_k with its own
// generator and evaluates the MSE of user k with the receiver `receiver(k, s, t)`
// built from s = h_k^H P and t = |s|^2 + noise.
template <class Mse>
std::vector<Mean> oracle_mse(const ChannelInstance& inst, const CMatrix& p, std::size_t count, std::uint64_t seed,
                             Mse mse) {
  const int users = static_cast<int>(p.cols());
  const int nt = static_cast<int>(p.rows());
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<Accumulator> acc(static_cast<std::size_t>(users));
  std::vector<Complex> h(static_cast<std::size_t>(nt));
  std::vector<Complex> s(static_cast<std::size_t>(users));
  for (std::size_t draw = 0; draw < count; ++draw) {
    for (int k = 0; k < users; ++k) {
      const double scale = std::sqrt(inst.error_vars[static_cast<std::size_t>(k)] / 2.0);
      for (int m = 0; m < nt; ++m) {
        const double re = normal(gen);
        const double im = normal(gen);
        h[static_cast<std::size_t>(m)] = inst.estimates[static_cast<std::size_t>(k)][m] + scale * Complex(re, im);
      }
      double t = inst.noise_var;
      for (int i = 0; i < users; ++i) {
        Complex acc_i = 0.0;
        for (int m = 0; m < nt; ++m) acc_i += std::conj(h[static_cast<std::size_t>(m)]) * p(m, i);
        s[static_cast<std::size_t>(i)] = acc_i;
        t += std::norm(acc_i);
      }
      acc[static_cast<std::size_t>(k)].add(mse(k, s, t));
    }
  }
  std::vector<Mean> out;
  for (const auto& a : acc) out.push_back(a.result());
  return out;
}

std::vector<Mean> oracle_mmse(const ChannelInstance& inst, const CMatrix& p, std::size_t count, std::uint64_t seed) {
  return oracle_mse(inst, p, count, seed, [](int k, const std::vector<Complex>& s, double t) {
    return 1.0 - std::norm(s[static_cast<std::size_t>(k)]) / t;
  });
}

// MSE of the CSIT-only receiver g_k = p_k^H h_hat_k / E{T_k}, computed from scratch.
std::vector<Mean> oracle_forwarded_mse(const ChannelInstance& inst, const CMatrix& p, std::size_t count,
                                       std::uint64_t seed) {
  std::vector<Complex> g;
  for (int k = 0; k < p.cols(); ++k) {
    const auto& hh = inst.estimates[static_cast<std::size_t>(k)];
    double t_bar = inst.noise_var;
    for (int i = 0; i < p.cols(); ++i)
      t_bar += std::norm(hh.dot(p.col(i))) + inst.error_vars[static_cast<std::size_t>(k)] * p.col(i).squaredNorm();
    g.push_back(p.col(k).dot(hh) / t_bar);
  }
  return oracle_mse(inst, p, count, seed, [&](int k, const std::vector<Complex>& s, double t) {
    const Complex gk = g[static_cast<std::size_t>(k)];
    const Complex e = gk * s[static_cast<std::size_t>(k)] - 1.0;
    return std::norm(e) + std::norm(gk) * (t - std::norm(s[static_cast<std::size_t>(k)]));
  });
}

template <class Work>
void parallel_for(std::size_t count, int workers, Work work) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) work(i);
    });
  for (auto& th : pool) th.join();
}

std::string num(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Eigenvalue ratios of every relaxed solve made by the suite.
class RankLedger {
 public:
  void add(const std::string& where, const std::vector<double>& ratios) {
    std::lock_guard lock(mutex_);
    for (double r : ratios) {
      ++count_;
      if (r > worst_) {
        worst_ = r;
        worst_where_ = where;
      }
      if (r >= 1e-5) ++violations_;
    }
  }
  void add(const std::string& where, const SolveReport& report) {
    for (const auto& it : report.iterations) add(where, it.eigen_ratios);
  }
  std::size_t count() const { return count_; }
  std::size_t violations() const { return violations_; }
  double worst() const { return worst_; }
  const std::string& worst_where() const { return worst_where_; }

 private:
  std::mutex mutex_;
  std::size_t count_ = 0;
  std::size_t violations_ = 0;
  double worst_ = 0.0;
  std::string worst_where_;
};

struct Context {
  int workers = 1;
  ChannelInstance scenario;
  RankLedger ranks;
};

AlgoConfig suite_config() {
  AlgoConfig c;
  c.eps_power = 1e-4;
  c.verify = false;  // the suite uses its own Monte-Carlo oracle
  return c;
}

CriterionResult verdict(bool ok, std::string detail) {
  return {"", ok ? Verdict::pass : Verdict::fail, std::move(detail), 0.0};
}

// ---------------------------------------------------------------------------

CriterionResult quartic_moment_check(Context& ctx) {
  constexpr std::size_t kCases = 50;
  constexpr std::size_t kSamples = 1'000'000;
  const int sizes[] = {2, 4, 8};
  const double scales[] = {0.05, 0.3, 1.0};
  std::vector<int> ok(kCases, 0);
  std::vector<double> z(kCases, 0.0);

  parallel_for(kCases, ctx.workers, [&](std::size_t c) {
    const int n = sizes[c % 3];
    const double s = scales[(c / 3) % 3];
    std::mt19937_64 gen(0xa11ce + c);
    std::normal_distribution<double> normal;
    auto cgauss = [&] { return Complex(normal(gen), normal(gen)) / std::sqrt(2.0); };
    // Random rank between 1 and n exercises singular matrices too.
    auto psd = [&] {
      const int rank = 1 + static_cast<int>(gen() % static_cast<std::uint64_t>(n));
      CMatrix g(n, rank);
      for (int j = 0; j < rank; ++j)
        for (int i = 0; i < n; ++i) g(i, j) = cgauss();
      return CMatrix(g * g.adjoint());
    };
    MomentInputs in;
    in.a = psd();
    in.b = psd();
    in.mean = CVector(n);
    for (int i = 0; i < n; ++i) in.mean[i] = cgauss();
    in.cov_scale = s;

    const double closed = quartic_moment(in);
    Accumulator acc;
    std::vector<Complex> x(static_cast<std::size_t>(n));
    const double sd = std::sqrt(s);
    for (std::size_t draw = 0; draw < kSamples; ++draw) {
      for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = in.mean[i] + sd * cgauss();
      double q1 = 0.0;
      double q2 = 0.0;
      for (int i = 0; i < n; ++i) {
        Complex ai = 0.0;
        Complex bi = 0.0;
        for (int j = 0; j < n; ++j) {
          ai += in.a(i, j) * x[static_cast<std::size_t>(j)];
          bi += in.b(i, j) * x[static_cast<std::size_t>(j)];
        }
        q1 += (std::conj(x[static_cast<std::size_t>(i)]) * ai).real();
        q2 += (std::conj(x[static_cast<std::size_t>(i)]) * bi).real();
      }
      acc.add(q1 * q2);
    }
    const auto mc = acc.result();
    z[c] = (closed - mc.mean) / mc.se;
    ok[c] = std::abs(z[c]) <= 3.0 ? 1 : 0;
  });

  const auto passed = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  double worst = 0.0;
  for (double v : z) worst = std::max(worst, std::abs(v));
  return verdict(passed >= 48, std::to_string(passed) + "/50 cases within 3 standard errors of a 1e6-sample mean, max |z| " +
                                   num(worst, 3));
}

CriterionResult single_user_power(Context& ctx) {
  ChannelInstance inst;
  CVector h(3);
  h << Complex(1.0, 0.5), Complex(-0.3, 0.8), Complex(0.2, -1.1);
  inst.estimates = {h};
  inst.error_vars = {0.0};
  inst.noise_var = 0.7;
  const AlgoConfig config = suite_config();

  double worst = 0.0;
  bool ok = true;
  std::ostringstream detail;
  for (double eps : {0.1, 0.25, 0.5, 0.9}) {
    const auto report = minimize_power(inst, eps, config);
    ctx.ranks.add("single-user", report);
    const double oracle = inst.noise_var * (1.0 - eps) / (eps * h.squaredNorm());
    const double rel = std::abs(report.final_objective - oracle) / oracle;
    const double rel_extracted = report.final_precoder ? std::abs(report.final_power - oracle) / oracle : 1.0;
    worst = std::max({worst, rel, rel_extracted});
    ok = ok && report.converged && rel <= 1e-6 && rel_extracted <= 1e-6;
  }
  detail << "max relative error " << num(worst, 3) << " against noise(1-eps)/(eps |h|^2)";
  return verdict(ok, detail.str());
}

CriterionResult power_min_convergence(Context& ctx) {
  const AlgoConfig config = suite_config();
  bool ok = true;
  std::ostringstream detail;
  for (double eps : {0.4, 0.25}) {
    const auto report = minimize_power(ctx.scenario, eps, config);
    ctx.ranks.add("power-min-convergence", report);
    const auto iterations = report.iterations.size();
    double worst = 0.0;
    double worst_se = 0.0;
    int worst_user = -1;
    if (report.final_precoder) {
      const auto mc = oracle_mmse(ctx.scenario, report.final_precoder->columns, 4000, 0x5eed + static_cast<int>(eps * 100));
      for (std::size_t k = 0; k < mc.size(); ++k)
        if (mc[k].mean > worst) {
          worst = mc[k].mean;
          worst_se = mc[k].se;
          worst_user = static_cast<int>(k) + 1;
        }
    }
    const double allowed = 0.005 * eps + 3.0 * worst_se;
    const bool point_ok = report.converged && iterations <= 10 && std::abs(worst - eps) <= allowed;
    ok = ok && point_ok;
    detail << "target " << eps << ": " << to_string(report.status) << " in " << iterations << " iterations, P0 "
           << num(report.final_objective) << ", worst user " << worst_user << " MC " << num(worst, 5) << " (allowed |err| "
           << num(allowed, 3) << "); ";
  }
  auto text = detail.str();
  text.resize(text.size() - 2);
  return verdict(ok, text);
}

CriterionResult duality(Context& ctx) {
  const AlgoConfig config = suite_config();
  bool ok = true;
  std::ostringstream detail;
  for (double eps : {0.25, 0.4}) {
    const auto forward = minimize_power(ctx.scenario, eps, config);
    ctx.ranks.add("duality", forward);
    if (!forward.converged) {
      ok = false;
      detail << "target " << eps << ": forward solve " << to_string(forward.status) << "; ";
      continue;
    }
    const auto inverse = minimize_maxammse_fixed_alpha(ctx.scenario, forward.final_objective, forward.final_alphas, config);
    if (inverse.extraction) ctx.ranks.add("duality", inverse.extraction->eigen_ratios);
    const double err = std::abs(inverse.t0 - eps);
    ok = ok && inverse.status == DesignStatus::converged && err <= 2.0 * config.eps_bisect;
    detail << "target " << eps << " -> P0 " << num(forward.final_objective) << " -> t0 " << num(inverse.t0, 8)
           << " (|err| " << num(err, 3) << "); ";
  }
  auto text = detail.str();
  text.resize(text.size() - 2);
  return verdict(ok, text);
}

CriterionResult monotonicity(Context& ctx) {
  const AlgoConfig config = suite_config();
  std::ostringstream detail;
  bool ok = true;

  std::vector<double> powers;
  for (double eps : {0.2, 0.3, 0.4, 0.5}) {
    const auto r = minimize_power(ctx.scenario, eps, config);
    ctx.ranks.add("monotonicity", r);
    ok = ok && r.converged;
    powers.push_back(r.final_objective);
  }
  for (std::size_t i = 1; i < powers.size(); ++i) ok = ok && powers[i] < powers[i - 1];
  detail << "P0 over targets {0.2,0.3,0.4,0.5}:";
  for (double p : powers) detail << ' ' << num(p, 5);

  const std::vector<double> snrs{0, 5, 10, 15, 20, 25, 30};
  std::vector<SolveReport> reports(snrs.size());
  parallel_for(snrs.size(), ctx.workers, [&](std::size_t i) {
    reports[i] = minimize_maxammse(ctx.scenario, snr_db_to_power(default_paper_scenario(), snrs[i]), config);
  });
  detail << "; t0 over SNR 0..30 dB:";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    ctx.ranks.add("monotonicity", reports[i]);
    ok = ok && reports[i].converged;
    if (i > 0) ok = ok && reports[i].final_objective <= reports[i - 1].final_objective + 2.0 * config.eps_bisect;
    detail << ' ' << num(reports[i].final_objective, 5);
  }
  return verdict(ok, detail.str());
}

CriterionResult ignorant_upper_bound(Context& ctx) {
  constexpr int kPrecoders = 20;
  std::vector<std::string> failures(kPrecoders);
  std::vector<double> margins(kPrecoders, 0.0);
  const int nt = ctx.scenario.num_antennas();
  const int users = ctx.scenario.num_users();
  parallel_for(kPrecoders, ctx.workers, [&](std::size_t i) {
    std::mt19937_64 gen(0xbead + i);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> power(0.5, 50.0);
    CMatrix p(nt, users);
    for (int c = 0; c < users; ++c)
      for (int r = 0; r < nt; ++r) p(r, c) = Complex(normal(gen), normal(gen));
    p *= std::sqrt(power(gen) / p.squaredNorm());
    const Precoder pre(p);
    const auto mc = oracle_mmse(ctx.scenario, p, 20000, 0xc0de + i);
    double margin = 1e9;
    for (int k = 0; k < users; ++k) {
      const double bound = ignorant_ammse(ctx.scenario, pre, k);
      const auto& m = mc[static_cast<std::size_t>(k)];
      margin = std::min(margin, (bound - m.mean) / m.se);
      if (bound < m.mean - 3.0 * m.se) failures[i] = "precoder " + std::to_string(i) + " user " + std::to_string(k + 1);
    }
    margins[i] = margin;
  });
  std::string failed;
  for (const auto& f : failures)
    if (!f.empty()) failed += (failed.empty() ? "" : ", ") + f;
  const double tightest = *std::min_element(margins.begin(), margins.end());
  return verdict(failed.empty(), failed.empty() ? "20 precoders x 4 users, tightest (bound - MC)/se " + num(tightest, 3)
                                                : "violated by " + failed);
}

CriterionResult power_scaling(Context& ctx) {
  const int nt = ctx.scenario.num_antennas();
  const int users = ctx.scenario.num_users();
  std::mt19937_64 gen(0xface);
  std::normal_distribution<double> normal;
  CMatrix p(nt, users);
  for (int c = 0; c < users; ++c)
    for (int r = 0; r < nt; ++r) p(r, c) = Complex(normal(gen), normal(gen));
  const Precoder base(p);

  std::vector<std::vector<McEstimate>> est;
  for (double c : {0.5, 1.0, 2.0, 4.0}) est.push_back(mc_ammse_all(ctx.scenario, base.scaled(c), 4000, 77, ctx.workers));
  bool ok = true;
  std::ostringstream detail;
  detail << "MC means per scale {0.5,1,2,4}:";
  for (int k = 0; k < users; ++k) {
    detail << " u" << k + 1 << '[';
    for (std::size_t i = 0; i < est.size(); ++i) {
      const auto& cur = est[i][static_cast<std::size_t>(k)];
      detail << (i ? " " : "") << num(cur.mean, 4);
      if (i > 0) {
        const auto& prev = est[i - 1][static_cast<std::size_t>(k)];
        ok = ok && cur.mean <= prev.mean + 3.0 * std::hypot(cur.std_error, prev.std_error);
      }
    }
    detail << ']';
  }
  return verdict(ok, detail.str());
}

CriterionResult aware_vs_ignorant(Context& ctx) {
  const AlgoConfig config = suite_config();
  const std::vector<double> snrs{0, 10, 20, 30};
  const int user = least_fortunate_user(default_paper_scenario()) - 1;
  std::vector<double> aware(snrs.size());
  std::vector<double> ignorant(snrs.size());
  std::vector<std::string> errors(snrs.size());
  std::vector<SolveReport> aware_reports(snrs.size());
  std::vector<SolveReport> ignorant_reports(snrs.size());

  parallel_for(snrs.size(), ctx.workers, [&](std::size_t i) {
    const double power = snr_db_to_power(default_paper_scenario(), snrs[i]);
    aware_reports[i] = minimize_maxammse(ctx.scenario, power, config);
    ignorant_reports[i] = minimize_maxammse_ignorant(ctx.scenario, power, config);
    if (!aware_reports[i].converged || !ignorant_reports[i].converged) {
      errors[i] = "solve failed at " + num(snrs[i]) + " dB";
      return;
    }
    // Common random numbers: both designs see the same channel draws.
    const std::uint64_t seed = 0xfeed + i;
    aware[i] = oracle_mmse(ctx.scenario, aware_reports[i].final_precoder->columns, 4000, seed)[static_cast<std::size_t>(user)].mean;
    ignorant[i] =
        oracle_forwarded_mse(ctx.scenario, ignorant_reports[i].final_precoder->columns, 4000, seed)[static_cast<std::size_t>(user)].mean;
  });

  bool ok = true;
  std::ostringstream detail;
  detail << "user " << user + 1 << " aware/ignorant MC AMMSE:";
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    ctx.ranks.add("aware-vs-ignorant", aware_reports[i]);
    ctx.ranks.add("aware-vs-ignorant", ignorant_reports[i]);
    if (!errors[i].empty()) {
      ok = false;
      detail << ' ' << errors[i] << ';';
      continue;
    }
    ok = ok && aware[i] <= ignorant[i];
    detail << ' ' << num(snrs[i]) << "dB " << num(aware[i], 4) << '/' << num(ignorant[i], 4);
  }
  const double gap_low = ignorant.front() - aware.front();
  const double gap_high = ignorant.back() - aware.back();
  ok = ok && gap_high > gap_low;
  detail << "; gap " << num(gap_low, 3) << " at 0 dB, " << num(gap_high, 3) << " at 30 dB";
  return verdict(ok, detail.str());
}

CriterionResult rank_one(Context& ctx) {
  std::ostringstream detail;
  detail << ctx.ranks.count() << " relaxed Gram matrices, worst lambda2/lambda1 " << num(ctx.ranks.worst(), 3);
  if (!ctx.ranks.worst_where().empty()) detail << " (" << ctx.ranks.worst_where() << ")";
  if (ctx.ranks.violations() > 0) {
    detail << ", " << ctx.ranks.violations() << " at or above 1e-5";
    return {"", Verdict::soft_fail, detail.str(), 0.0};
  }
  return verdict(ctx.ranks.count() > 0, detail.str());
}

using Criterion = CriterionResult (*)(Context&);

const std::vector<std::pair<std::string, Criterion>>& registry() {
  static const std::vector<std::pair<std::string, Criterion>> r{
      {"quartic-moment", quartic_moment_check},       {"single-user-power", single_user_power},
      {"power-min-convergence", power_min_convergence}, {"duality", duality},
      {"monotonicity", monotonicity},         {"ignorant-upper-bound", ignorant_upper_bound},
      {"power-scaling", power_scaling},   {"aware-vs-ignorant", aware_vs_ignorant},
      {"rank-one", rank_one},
  };
  return r;
}

}  // namespace

std::vector<std::string> criterion_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, fn] : registry()) ids.push_back(id);
  return ids;
}

std::vector<CriterionResult> run(const Options& options, const std::function<void(const CriterionResult&)>& sink) {
  for (const auto& id : options.only) {
    const auto ids = criterion_ids();
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw ConfigError("unknown criterion '" + id + "'");
  }
  Context ctx;
  ctx.workers = options.workers > 0 ? options.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  ctx.scenario = build_instance(default_paper_scenario());

  std::vector<CriterionResult> results;
  for (const auto& [id, fn] : registry()) {
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), id) == options.only.end()) continue;
    const auto start = Clock::now();
    CriterionResult r;
    try {
      r = fn(ctx);
    } catch (const std::exception& e) {
      r = {"", Verdict::fail, std::string("exception: ") + e.what(), 0.0};
    }
    r.id = id;
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (sink) sink(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format(const CriterionResult& r) {
  const char* tag = r.verdict == Verdict::pass ? "PASS" : r.verdict == Verdict::fail ? "FAIL" : "SOFT-FAIL";
  std::ostringstream os;
  os << tag << ' ' << r.id << ": " << r.detail << " (" << std::fixed << std::setprecision(1) << r.seconds << " s)";
  return os.str();
}

bool all_passed(const std::vector<CriterionResult>& results) {
  return std::none_of(results.begin(), results.end(), [](const auto& r) { return r.verdict == Verdict::fail; });
}

}  // namespace rbp::acceptance
