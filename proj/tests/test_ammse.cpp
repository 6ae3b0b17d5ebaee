#include <doctest.h>

#include <cmath>
#include <random>

#include "robust_precoding/ammse.hpp"

using namespace rbp;

namespace {

CMatrix random_matrix(int rows, int cols, std::mt19937_64& gen) {
  std::normal_distribution<double> n;
  CMatrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = Complex(n(gen), n(gen));
  return m;
}

ChannelInstance random_instance(int nt, int users, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.01, 0.4);
  ChannelInstance inst;
  for (int k = 0; k < users; ++k) {
    inst.estimates.push_back(random_matrix(nt, 1, gen).col(0));
    inst.error_vars.push_back(u(gen));
  }
  inst.noise_var = 0.8;
  return inst;
}

}  // namespace

TEST_CASE("exact MMSE of a scalar link") {
  CVector h(1);
  h << 1.0;
  const Precoder p(CMatrix::Constant(1, 1, Complex(0.0, std::sqrt(2.0))));
  // R = 2, T = 2 + 0.5
  CHECK(exact_mmse(h, p, 0, 0.5) == doctest::Approx(1.0 - 2.0 / 2.5));
  CHECK(sinr_from_mmse(0.2) == doctest::Approx(4.0));
  CHECK(rate_lower_bound(0.5) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rate_lower_bound(0.0), ConfigError);
  CHECK_THROWS_AS(rate_lower_bound(1.5), ConfigError);
}

TEST_CASE("the MMSE receiver minimises the receiver MSE") {
  std::mt19937_64 gen(3);
  const CVector h = random_matrix(4, 1, gen).col(0);
  const Precoder p(random_matrix(4, 3, gen));
  for (int k = 0; k < 3; ++k) {
    const Complex g = mmse_receiver_gain(h, p, k, 0.6);
    const double at_opt = receiver_mse(h, p, k, 0.6, g);
    CHECK(at_opt == doctest::Approx(exact_mmse(h, p, k, 0.6)).epsilon(1e-12));
    // Central differences in the real and imaginary directions vanish and the
    // curvature is positive.
    const double d = 1e-5;
    for (const Complex dir : {Complex(1, 0), Complex(0, 1)}) {
      const double plus = receiver_mse(h, p, k, 0.6, g + d * dir);
      const double minus = receiver_mse(h, p, k, 0.6, g - d * dir);
      CHECK(std::abs(plus - minus) / (2 * d) < 1e-6);
      CHECK(plus > at_opt);
      CHECK(minus > at_opt);
    }
  }
}

TEST_CASE("ignorant AMMSE and its forwarded receiver") {
  std::mt19937_64 gen(5);
  const auto inst = random_instance(3, 2, gen);
  const Precoder p(random_matrix(3, 2, gen) * 0.8);
  for (int k = 0; k < 2; ++k) {
    const auto& h = inst.estimates[static_cast<std::size_t>(k)];
    const double e = inst.error_vars[static_cast<std::size_t>(k)];
    double t_bar = inst.noise_var;
    for (int i = 0; i < 2; ++i) t_bar += std::norm(h.dot(p.columns.col(i))) + e * p.columns.col(i).squaredNorm();
    const double expected = 1.0 - std::norm(h.dot(p.columns.col(k))) / t_bar;
    CHECK(ignorant_ammse(inst, p, k) == doctest::Approx(expected).epsilon(1e-13));
  }
  // Averaging the forwarded receiver's MSE over the error distribution gives
  // the ignorant AMMSE.
  std::vector<Complex> g{ignorant_receiver_gain(inst, p, 0), ignorant_receiver_gain(inst, p, 1)};
  const auto mc = mc_fixed_receiver_mse_all(inst, p, g, 60000, 8);
  for (int k = 0; k < 2; ++k)
    CHECK(std::abs(mc[static_cast<std::size_t>(k)].mean - ignorant_ammse(inst, p, k)) <
          5.0 * mc[static_cast<std::size_t>(k)].std_error);
}

TEST_CASE("quartic moment of scalar Gaussians") {
  // x ~ CN(mu, s): E|x|^4 = |mu|^4 + 4 |mu|^2 s + 2 s^2.
  for (double s : {0.0, 0.3, 2.0}) {
    const Complex mu(0.7, -1.2);
    MomentInputs in;
    in.mean = CVector::Constant(1, mu);
    in.cov_scale = s;
    in.a = CMatrix::Constant(1, 1, 1.5);
    in.b = CMatrix::Constant(1, 1, 0.4);
    const double m2 = std::norm(mu);
    const double oracle = 1.5 * 0.4 * (m2 * m2 + 4.0 * m2 * s + 2.0 * s * s);
    CHECK(quartic_moment(in) == doctest::Approx(oracle).epsilon(1e-13));
  }
}

TEST_CASE("quartic moment degenerate cases") {
  std::mt19937_64 gen(7);
  const CMatrix ga = random_matrix(3, 3, gen);
  const CMatrix gb = random_matrix(3, 2, gen);
  MomentInputs in;
  in.a = ga * ga.adjoint();
  in.b = gb * gb.adjoint();
  in.mean = random_matrix(3, 1, gen).col(0);

  SUBCASE("no randomness") {
    in.cov_scale = 0.0;
    const double q1 = in.mean.dot(in.a * in.mean).real();
    const double q2 = in.mean.dot(in.b * in.mean).real();
    CHECK(quartic_moment(in) == doctest::Approx(q1 * q2).epsilon(1e-13));
  }
  SUBCASE("zero mean") {
    // E{x^H A x x^H B x} = s^2 (tr A tr B + tr AB) for x ~ CN(0, s I).
    in.mean.setZero();
    in.cov_scale = 0.7;
    const double oracle =
        0.49 * (in.a.trace().real() * in.b.trace().real() + (in.a * in.b).trace().real());
    CHECK(quartic_moment(in) == doctest::Approx(oracle).epsilon(1e-13));
  }
  SUBCASE("dimension mismatch") {
    in.b = CMatrix::Identity(2, 2);
    CHECK_THROWS_AS(quartic_moment(in), ConfigError);
  }
}

TEST_CASE("closed-form moments agree with sampling") {
  std::mt19937_64 gen(11);
  const auto inst = random_instance(3, 3, gen);
  const Precoder p(random_matrix(3, 3, gen) * 0.6);
  const auto gram = GramSet::from_precoder(p);
  const std::size_t n = 80000;
  for (int k = 0; k < 3; ++k) {
    double rt = 0, t2 = 0, rt2 = 0, t22 = 0;
    for_each_sample(inst, n, 13, [&](std::size_t, const ChannelSample& s) {
      const auto& h = s.realizations[static_cast<std::size_t>(k)];
      const Eigen::RowVectorXcd gains = h.adjoint() * p.columns;
      const double rv = std::norm(gains[k]);
      const double tv = gains.squaredNorm() + inst.noise_var;
      rt += rv * tv;
      t2 += tv * tv;
      rt2 += rv * tv * rv * tv;
      t22 += tv * tv * tv * tv;
    });
    const double dn = static_cast<double>(n);
    const double rt_se = std::sqrt((rt2 / dn - (rt / dn) * (rt / dn)) / dn);
    const double t2_se = std::sqrt((t22 / dn - (t2 / dn) * (t2 / dn)) / dn);
    CHECK(std::abs(rt / dn - expected_RT(inst, gram, k)) < 5.0 * rt_se);
    CHECK(std::abs(t2 / dn - expected_T2(inst, gram, k)) < 5.0 * t2_se);

    // Means follow from the correlation matrix directly.
    const CMatrix corr = inst.channel_correlation(k);
    double t_oracle = inst.noise_var;
    for (int i = 0; i < 3; ++i) t_oracle += p.columns.col(i).dot(corr * p.columns.col(i)).real();
    CHECK(expected_R(inst, gram, k) == doctest::Approx(p.columns.col(k).dot(corr * p.columns.col(k)).real()));
    CHECK(expected_T(inst, gram, k) == doctest::Approx(t_oracle));
  }
}

TEST_CASE("second-order AMMSE: moment route, alpha form and perfect-CSI limit") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = random_instance(4, 3, gen);
    const Precoder p(random_matrix(4, 3, gen) * (0.2 + 0.3 * trial));
    const auto gram = GramSet::from_precoder(p);
    for (int k = 0; k < 3; ++k) {
      const auto b = ammse_breakdown(inst, gram, k);
      CHECK(std::abs(ammse_order2_from_moments(inst, gram, k) - b.value_order2) < 1e-10);
      REQUIRE(b.alpha);
      CHECK(std::abs(1.0 - *b.alpha * b.r_bar / b.t_bar - b.value_order2) < 1e-12);
      CHECK(b.value_order1 == doctest::Approx(1.0 - b.r_bar / b.t_bar));
      const auto via_precoder = ammse_breakdown(inst, p, k);
      CHECK(via_precoder.value_order2 == doctest::Approx(b.value_order2).epsilon(1e-12));
    }
  }

  auto inst = random_instance(3, 2, gen);
  inst.error_vars = {0.0, 0.0};
  const Precoder p(random_matrix(3, 2, gen));
  for (int k = 0; k < 2; ++k) {
    const auto b = ammse_breakdown(inst, p, k);
    const double exact = exact_mmse(inst.estimates[static_cast<std::size_t>(k)], p, k, inst.noise_var);
    CHECK(b.value_order2 == doctest::Approx(exact).epsilon(1e-13));
    CHECK(b.value_order1 == doctest::Approx(exact).epsilon(1e-13));
    CHECK(*b.alpha == doctest::Approx(1.0).epsilon(1e-13));
  }
}

TEST_CASE("alpha is undefined for a silent user") {
  std::mt19937_64 gen(19);
  const auto inst = random_instance(3, 2, gen);
  CMatrix cols = random_matrix(3, 2, gen);
  cols.col(1).setZero();
  const auto b = ammse_breakdown(inst, Precoder(cols), 1);
  CHECK(!b.alpha);
  CHECK(b.value_order2 == doctest::Approx(1.0));
}

TEST_CASE("hermitian_part tolerates rounding and rejects asymmetric input") {
  CMatrix m(2, 2);
  m << Complex(2, 0), Complex(0.5, 0.1), Complex(0.5, -0.1), Complex(1, 0);
  CHECK((hermitian_part(m, "test") - m).norm() == 0.0);

  CMatrix noisy = m;
  noisy(0, 1) += 1e-7;
  const CMatrix fixed = hermitian_part(noisy, "test");
  CHECK((fixed - fixed.adjoint()).norm() == 0.0);

  CMatrix bad = m;
  bad(0, 1) += 0.3;
  CHECK_THROWS_AS(hermitian_part(bad, "test"), ConfigError);
}

TEST_CASE("Gram sets validate positive semidefiniteness") {
  CMatrix neg = CMatrix::Identity(2, 2);
  neg(1, 1) = -1e-3;
  CHECK_THROWS_AS(GramSet::from_matrices({neg}), NumericalError);
  CMatrix tiny = CMatrix::Identity(2, 2);
  tiny(1, 1) = -1e-12;
  const auto g = GramSet::from_matrices({tiny, CMatrix::Identity(2, 2)});
  CHECK(g.total_power() == doctest::Approx(3.0));
}

TEST_CASE("Monte-Carlo AMMSE converges to the exact MMSE without errors") {
  std::mt19937_64 gen(23);
  auto inst = random_instance(3, 2, gen);
  inst.error_vars = {0.0, 0.0};
  const Precoder p(random_matrix(3, 2, gen));
  const auto mc = mc_ammse(inst, p, 1, 100, 4);
  CHECK(mc.mean == doctest::Approx(exact_mmse(inst.estimates[1], p, 1, inst.noise_var)));
  CHECK(mc.std_error < 1e-12);
  CHECK_THROWS_AS(mc_ammse(inst, p, 0, 1, 4), ConfigError);
}
