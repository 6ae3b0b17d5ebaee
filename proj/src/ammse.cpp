#include "robust_precoding/ammse.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace rbp {

namespace {

constexpr double kSilentAsymmetry = 1e-8;
constexpr double kMaxAsymmetry = 1e-6;

void check_user(int k, int users) {
  if (k < 0 || k >= users) throw ConfigError("user index " + std::to_string(k) + " out of range");
}

void check_dims(const ChannelInstance& instance, int antennas, int users) {
  if (instance.num_antennas() != antennas || instance.num_users() != users)
    throw ConfigError("precoder dimensions do not match the channel instance");
}

// Running mean / second central moment, merged in a fixed order.
struct Welford {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  void merge(const Welford& o) {
    if (o.n == 0.0) return;
    const double total = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
  }

  McEstimate estimate() const {
    if (n < 2.0) return {mean, 0.0};
    const double var = std::max(m2 / (n - 1.0), 0.0);
    return {mean, std::sqrt(var / n)};
  }
};

}  // namespace

CMatrix hermitian_part(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols()) throw ConfigError(std::string(what) + " must be square");
  const double scale = std::max(1.0, m.norm());
  const double asym = (m - m.adjoint()).norm() / scale;
  if (asym > kMaxAsymmetry) throw ConfigError(std::string(what) + " is not Hermitian");
  if (asym > kSilentAsymmetry)
    spdlog::warn("{}: symmetrising matrix with relative asymmetry {:.3e}", what, asym);
  return (m + m.adjoint()) * 0.5;
}

GramSet GramSet::from_precoder(const Precoder& precoder) {
  GramSet g;
  const int n = precoder.num_antennas();
  g.sum = CMatrix::Zero(n, n);
  g.per_user.reserve(static_cast<std::size_t>(precoder.num_users()));
  for (int k = 0; k < precoder.num_users(); ++k) {
    CMatrix q = precoder.beam(k) * precoder.beam(k).adjoint();
    g.sum += q;
    g.per_user.push_back(std::move(q));
  }
  return g;
}

GramSet GramSet::from_matrices(std::vector<CMatrix> per_user, double tol_psd) {
  if (per_user.empty()) throw ConfigError("Gram set needs at least one user");
  const auto n = per_user.front().rows();
  GramSet g;
  g.sum = CMatrix::Zero(n, n);
  for (auto& q : per_user) {
    if (q.rows() != n || q.cols() != n) throw ConfigError("Gram matrices must share one size");
    q = hermitian_part(q, "Gram matrix");
    const double min_eig = Eigen::SelfAdjointEigenSolver<CMatrix>(q, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    if (min_eig < -tol_psd * std::max(1.0, q.trace().real()))
      throw NumericalError("Gram matrix is not positive semidefinite (min eigenvalue " +
                           std::to_string(min_eig) + ")");
    g.sum += q;
  }
  g.per_user = std::move(per_user);
  return g;
}

double exact_mmse(const CVector& h, const Precoder& precoder, int k, double noise_var) {
  check_user(k, precoder.num_users());
  if (h.size() != precoder.num_antennas()) throw ConfigError("channel and precoder sizes differ");
  if (!(noise_var > 0.0)) throw ConfigError("noise variance must be positive");
  const Eigen::RowVectorXcd gains = h.adjoint() * precoder.columns;
  const double t = gains.squaredNorm() + noise_var;
  const double r = std::norm(gains[k]);
  return 1.0 - r / t;
}

Complex mmse_receiver_gain(const CVector& h, const Precoder& precoder, int k, double noise_var) {
  check_user(k, precoder.num_users());
  if (h.size() != precoder.num_antennas()) throw ConfigError("channel and precoder sizes differ");
  const Eigen::RowVectorXcd gains = h.adjoint() * precoder.columns;
  const double t = gains.squaredNorm() + noise_var;
  // p_k^H h = conj(h^H p_k)
  return std::conj(gains[k]) / t;
}

double receiver_mse(const CVector& h, const Precoder& precoder, int k, double noise_var, Complex g) {
  check_user(k, precoder.num_users());
  const Eigen::RowVectorXcd gains = h.adjoint() * precoder.columns;
  const double t = gains.squaredNorm() + noise_var;
  return std::norm(g) * t - 2.0 * (g * gains[k]).real() + 1.0;
}

double ignorant_ammse(const ChannelInstance& instance, const Precoder& precoder, int k) {
  check_dims(instance, precoder.num_antennas(), precoder.num_users());
  check_user(k, precoder.num_users());
  const auto& h_hat = instance.estimates[static_cast<std::size_t>(k)];
  const double var = instance.error_vars[static_cast<std::size_t>(k)];
  const Eigen::RowVectorXcd gains = h_hat.adjoint() * precoder.columns;
  const double t_bar = gains.squaredNorm() + var * precoder.total_power() + instance.noise_var;
  return 1.0 - std::norm(gains[k]) / t_bar;
}

Complex ignorant_receiver_gain(const ChannelInstance& instance, const Precoder& precoder, int k) {
  check_dims(instance, precoder.num_antennas(), precoder.num_users());
  check_user(k, precoder.num_users());
  const auto& h_hat = instance.estimates[static_cast<std::size_t>(k)];
  const double var = instance.error_vars[static_cast<std::size_t>(k)];
  const Eigen::RowVectorXcd gains = h_hat.adjoint() * precoder.columns;
  const double t_bar = gains.squaredNorm() + var * precoder.total_power() + instance.noise_var;
  return std::conj(gains[k]) / t_bar;
}

double quartic_moment(const MomentInputs& in) {
  const auto n = in.mean.size();
  if (in.a.rows() != n || in.b.rows() != n) throw ConfigError("moment inputs: dimensions disagree");
  if (!(in.cov_scale >= 0.0)) throw ConfigError("moment inputs: covariance scale must be nonnegative");
  const CMatrix a = hermitian_part(in.a, "quadratic form A");
  const CMatrix b = hermitian_part(in.b, "quadratic form B");
  const double s = in.cov_scale;
  const CVector& x = in.mean;

  // C = s I, so ACB = s AB and tr(ACBC) = s^2 tr(AB).
  const CVector ax = a * x;
  const CVector bx = b * x;
  const Complex cross = s * (ax.dot(bx) + bx.dot(ax));
  const Complex trace_term = s * s * (a.cwiseProduct(b.transpose())).sum();
  const Complex qa = s * a.trace() + x.dot(ax);
  const Complex qb = s * b.trace() + x.dot(bx);
  const Complex value = cross + trace_term + qa * qb;

  if (std::abs(value.imag()) > 1e-10 * std::max(1.0, std::abs(value.real())))
    throw NumericalError("quartic moment has a non-negligible imaginary part");
  return value.real();
}

double expected_R(const ChannelInstance& instance, const GramSet& gram, int k) {
  check_user(k, gram.num_users());
  const auto& h = instance.estimates[static_cast<std::size_t>(k)];
  const auto& qk = gram.per_user[static_cast<std::size_t>(k)];
  const double var = instance.error_vars[static_cast<std::size_t>(k)];
  return h.dot(qk * h).real() + var * qk.trace().real();
}

double expected_T(const ChannelInstance& instance, const GramSet& gram, int k) {
  check_user(k, gram.num_users());
  const auto& h = instance.estimates[static_cast<std::size_t>(k)];
  const double var = instance.error_vars[static_cast<std::size_t>(k)];
  return h.dot(gram.sum * h).real() + var * gram.sum.trace().real() + instance.noise_var;
}

namespace {

struct TaylorTerms {
  double r_bar, t_bar, a, b, var;
};

TaylorTerms taylor_terms(const ChannelInstance& instance, const GramSet& gram, int k) {
  check_dims(instance, static_cast<int>(gram.sum.rows()), gram.num_users());
  check_user(k, gram.num_users());
  const auto& h = instance.estimates[static_cast<std::size_t>(k)];
  const auto& qk = gram.per_user[static_cast<std::size_t>(k)];
  const auto& q = gram.sum;
  const double var = instance.error_vars[static_cast<std::size_t>(k)];

  const CVector qh = q * h;
  const CVector qkh = qk * h;
  // h^H (Qk Q + Q Qk) h = 2 Re((Qk h)^H (Q h)); tr(Qk Q) = sum conj(Qk) .* Q for Hermitian Qk.
  const double a = 2.0 * qkh.dot(qh).real() + var * qk.cwiseProduct(q.transpose()).sum().real();
  const double b = 2.0 * qh.squaredNorm() + var * q.squaredNorm();
  return {expected_R(instance, gram, k), expected_T(instance, gram, k), a, b, var};
}

}  // namespace

double expected_RT(const ChannelInstance& instance, const GramSet& gram, int k) {
  const auto t = taylor_terms(instance, gram, k);
  return t.var * t.a + t.r_bar * t.t_bar;
}

double expected_T2(const ChannelInstance& instance, const GramSet& gram, int k) {
  const auto t = taylor_terms(instance, gram, k);
  return t.var * t.b + t.t_bar * t.t_bar;
}

AmmseBreakdown ammse_breakdown(const ChannelInstance& instance, const GramSet& gram, int k) {
  const auto t = taylor_terms(instance, gram, k);
  AmmseBreakdown out;
  out.r_bar = t.r_bar;
  out.t_bar = t.t_bar;
  out.a = t.a;
  out.b = t.b;
  out.value_order1 = 1.0 - t.r_bar / t.t_bar;
  const double t2 = t.t_bar * t.t_bar;
  out.value_order2 = out.value_order1 + t.a * t.var / t2 - t.b * t.var * t.r_bar / (t2 * t.t_bar);
  if (t.r_bar > 0.0) {
    out.alpha = 1.0 - t.var / (t2 * t.r_bar) * (t.a * t.t_bar - t.b * t.r_bar);
  }
  return out;
}

AmmseBreakdown ammse_breakdown(const ChannelInstance& instance, const Precoder& precoder, int k) {
  return ammse_breakdown(instance, GramSet::from_precoder(precoder), k);
}

double ammse_order2_from_moments(const ChannelInstance& instance, const GramSet& gram, int k) {
  check_dims(instance, static_cast<int>(gram.sum.rows()), gram.num_users());
  check_user(k, gram.num_users());
  const auto idx = static_cast<std::size_t>(k);
  const double noise = instance.noise_var;
  const double r_bar = expected_R(instance, gram, k);
  const double t_bar = expected_T(instance, gram, k);

  MomentInputs rt{instance.estimates[idx], instance.error_vars[idx], gram.per_user[idx], gram.sum};
  MomentInputs tt{instance.estimates[idx], instance.error_vars[idx], gram.sum, gram.sum};
  // T = h^H Q h + noise, so E{R T} = E{R h^H Q h} + noise E{R} and
  // E{T^2} = E{(h^H Q h)^2} + 2 noise E{h^H Q h} + noise^2.
  const double e_rt = quartic_moment(rt) + noise * r_bar;
  const double e_t2 = quartic_moment(tt) + 2.0 * noise * (t_bar - noise) + noise * noise;
  const double cov = e_rt - r_bar * t_bar;
  const double var = e_t2 - t_bar * t_bar;
  return 1.0 - (r_bar / t_bar - cov / (t_bar * t_bar) + r_bar * var / (t_bar * t_bar * t_bar));
}

namespace {

// Per-user Welford statistics of `mse(k, gains, t)` over the sampled channels,
// with gains = h_k^H P and t = |gains|^2 + noise.
template <class Mse>
std::vector<McEstimate> mc_mse_all(const ChannelInstance& instance, const Precoder& precoder, std::size_t count,
                                   std::uint64_t seed, int workers, Mse mse) {
  check_dims(instance, precoder.num_antennas(), precoder.num_users());
  if (count < 2) throw ConfigError("Monte-Carlo count must be at least 2");
  const auto users = static_cast<std::size_t>(precoder.num_users());
  std::vector<std::vector<Welford>> per_chunk(num_chunks(count), std::vector<Welford>(users));

  parallel_chunks(count, workers, [&](std::size_t chunk) {
    auto& acc = per_chunk[chunk];
    generate_chunk(instance, count, seed, chunk, [&](std::size_t, const ChannelSample& s) {
      for (std::size_t k = 0; k < users; ++k) {
        const Eigen::RowVectorXcd gains = s.realizations[k].adjoint() * precoder.columns;
        const double t = gains.squaredNorm() + instance.noise_var;
        acc[k].add(mse(k, gains, t));
      }
    });
  });

  std::vector<McEstimate> out(users);
  for (std::size_t k = 0; k < users; ++k) {
    Welford total;
    for (const auto& acc : per_chunk) total.merge(acc[k]);
    out[k] = total.estimate();
  }
  return out;
}

}  // namespace

std::vector<McEstimate> mc_ammse_all(const ChannelInstance& instance, const Precoder& precoder,
                                     std::size_t count, std::uint64_t seed, int workers) {
  return mc_mse_all(instance, precoder, count, seed, workers,
                    [](std::size_t k, const Eigen::RowVectorXcd& gains, double t) {
                      return 1.0 - std::norm(gains[static_cast<Eigen::Index>(k)]) / t;
                    });
}

std::vector<McEstimate> mc_fixed_receiver_mse_all(const ChannelInstance& instance, const Precoder& precoder,
                                                  const std::vector<Complex>& receivers, std::size_t count,
                                                  std::uint64_t seed, int workers) {
  if (receivers.size() != static_cast<std::size_t>(precoder.num_users()))
    throw ConfigError("one receiver gain per user required");
  return mc_mse_all(instance, precoder, count, seed, workers,
                    [&](std::size_t k, const Eigen::RowVectorXcd& gains, double t) {
                      const Complex g = receivers[k];
                      return std::norm(g) * t - 2.0 * (g * gains[static_cast<Eigen::Index>(k)]).real() + 1.0;
                    });
}

McEstimate mc_ammse(const ChannelInstance& instance, const Precoder& precoder, int k,
                    std::size_t count, std::uint64_t seed, int workers) {
  check_user(k, precoder.num_users());
  return mc_ammse_all(instance, precoder, count, seed, workers)[static_cast<std::size_t>(k)];
}

double rate_lower_bound(double ammse) {
  if (!(ammse > 0.0) || ammse > 1.0) throw ConfigError("AMMSE must lie in (0, 1]");
  return -std::log2(ammse);
}

double sinr_from_mmse(double mmse) {
  if (!(mmse > 0.0)) throw ConfigError("MMSE must be positive");
  return (1.0 - mmse) / mmse;
}

void to_json(nlohmann::json& j, const AmmseBreakdown& b) {
  j = nlohmann::json{{"r_bar", b.r_bar},
                     {"t_bar", b.t_bar},
                     {"a", b.a},
                     {"b", b.b},
                     {"value_order1", b.value_order1},
                     {"value_order2", b.value_order2}};
  j["alpha"] = b.alpha ? nlohmann::json(*b.alpha) : nlohmann::json(nullptr);
}

}  // namespace rbp
