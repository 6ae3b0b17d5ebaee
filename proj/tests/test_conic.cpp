#include <doctest.h>

#include <random>
#include <sstream>

#include "robust_precoding/conic.hpp"
#include "robust_precoding/plr.hpp"

using namespace rbp;

namespace {

CMatrix random_hermitian(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  CMatrix g(n, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) g(r, c) = Complex(d(gen), d(gen));
  return g + g.adjoint();
}

}  // namespace

TEST_CASE("Hermitian embedding round trip and trace identity") {
  std::mt19937_64 gen(1);
  for (int n : {1, 2, 5}) {
    const CMatrix q = random_hermitian(n, gen);
    const CMatrix a = random_hermitian(n, gen);
    const RMatrix x = embed_hermitian(q);
    CHECK(x.rows() == 2 * n);
    CHECK((x - x.transpose()).norm() == 0.0);
    CHECK((unembed_hermitian(x) - q).norm() < 1e-14);
    CHECK((a * q).trace().real() == doctest::Approx((embed_hermitian(a) * x).trace() / 2.0));

    // Eigenvalues of the embedding are those of q, each twice.
    Eigen::VectorXd lq = Eigen::SelfAdjointEigenSolver<CMatrix>(q).eigenvalues();
    Eigen::VectorXd lx = Eigen::SelfAdjointEigenSolver<RMatrix>(x).eigenvalues();
    for (int i = 0; i < n; ++i) {
      CHECK(lx[2 * i] == doctest::Approx(lq[i]));
      CHECK(lx[2 * i + 1] == doctest::Approx(lq[i]));
    }
  }
}

TEST_CASE("unembedding projects a general symmetric matrix") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> d;
  RMatrix g(4, 4);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) g(r, c) = d(gen);
  const RMatrix x = g * g.transpose();
  const CMatrix q = unembed_hermitian(x);
  CHECK((q - q.adjoint()).norm() < 1e-14);
  CHECK(Eigen::SelfAdjointEigenSolver<CMatrix>(q).eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("embedded triplets reproduce the complex inner product") {
  std::mt19937_64 gen(3);
  const CMatrix a = random_hermitian(3, gen);
  const CMatrix q = random_hermitian(3, gen);
  ConicProblem p;
  p.blocks = {{ConeKind::psd, 6}};
  append_embedded(p.objective, 0, a, 0.5);
  CHECK_NOTHROW(p.validate());
  const double value = ConicProblem::inner(p.dense(p.objective), {embed_hermitian(q)});
  CHECK(value == doctest::Approx((a * q).trace().real()));
}

TEST_CASE("problem validation") {
  ConicProblem p;
  p.blocks = {{ConeKind::psd, 2}, {ConeKind::nonneg, 3}};
  p.objective = {{0, 0, 1, 1.0}};
  CHECK_NOTHROW(p.validate());
  p.objective = {{0, 1, 0, 1.0}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.objective = {{1, 0, 1, 1.0}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.objective = {{2, 0, 0, 1.0}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.objective = {{0, 0, 2, 1.0}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("linear program") {
  // min x1 + 2 x2  s.t.  x1 + x2 >= 1, x1 <= 0.25  ->  x1 = 0.25, x2 = 0.75, value 1.75
  ConicProblem p;
  p.blocks = {{ConeKind::nonneg, 2}};
  p.objective = {{0, 0, 0, 1.0}, {0, 1, 1, 2.0}};
  p.constraints.push_back({{{0, 0, 0, 1.0}, {0, 1, 1, 1.0}}, Sense::ge, 1.0});
  p.constraints.push_back({{{0, 0, 0, 1.0}}, Sense::le, 0.25});
  const auto sol = default_backend()->solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.objective_value == doctest::Approx(1.75).epsilon(1e-7));
  CHECK(sol.blocks[0](0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(sol.dual_objective == doctest::Approx(1.75).epsilon(1e-7));
  CHECK(sol.duals.size() == 2);
}

TEST_CASE("semidefinite program: smallest eigenvalue") {
  // min <C, X>  s.t.  tr X = 1, X psd  has value lambda_min(C).
  std::mt19937_64 gen(4);
  std::normal_distribution<double> d;
  RMatrix g(5, 5);
  for (int c = 0; c < 5; ++c)
    for (int r = 0; r < 5; ++r) g(r, c) = d(gen);
  const RMatrix c = g + g.transpose();
  ConicProblem p;
  p.blocks = {{ConeKind::psd, 5}};
  LinearConstraint trace;
  trace.sense = Sense::eq;
  trace.rhs = 1.0;
  for (int r = 0; r < 5; ++r) {
    trace.coefficients.push_back({0, r, r, 1.0});
    for (int col = r; col < 5; ++col) p.objective.push_back({0, r, col, c(r, col)});
  }
  p.constraints.push_back(trace);
  const auto sol = default_backend()->solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  const double oracle = Eigen::SelfAdjointEigenSolver<RMatrix>(c).eigenvalues()[0];
  CHECK(sol.objective_value == doctest::Approx(oracle).epsilon(1e-7));
}

TEST_CASE("infeasible programs are certified") {
  ConicProblem p;
  p.blocks = {{ConeKind::psd, 2}};
  p.objective = {{0, 0, 0, 1.0}, {0, 1, 1, 1.0}};
  p.constraints.push_back({{{0, 0, 0, 1.0}, {0, 1, 1, 1.0}}, Sense::le, -1.0});
  CHECK(default_backend()->solve(p).status == SolveStatus::infeasible);

  ConicProblem zero_row;
  zero_row.blocks = {{ConeKind::nonneg, 1}};
  zero_row.objective = {{0, 0, 0, 1.0}};
  zero_row.constraints.push_back({{}, Sense::eq, 1.0});
  CHECK(default_backend()->solve(zero_row).status == SolveStatus::infeasible);
}

TEST_CASE("problem dump round trip") {
  ChannelInstance inst;
  CVector h(2);
  h << Complex(1, 0.5), Complex(-0.2, 0.3);
  inst.estimates = {h, h.conjugate()};
  inst.error_vars = {0.05, 0.1};
  const auto p = build_plr({inst, 0.3, {0.9, 0.95}, ConstraintModel::aware});

  std::stringstream ss;
  write_problem(ss, p);
  const auto back = read_problem(ss);
  REQUIRE(back.blocks.size() == p.blocks.size());
  REQUIRE(back.constraints.size() == p.constraints.size());
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    CHECK(back.constraints[i].sense == p.constraints[i].sense);
    CHECK(back.constraints[i].rhs == p.constraints[i].rhs);
    const auto a = p.dense(p.constraints[i].coefficients);
    const auto b = back.dense(back.constraints[i].coefficients);
    for (std::size_t blk = 0; blk < a.size(); ++blk) CHECK((a[blk] - b[blk]).norm() == 0.0);
  }
  std::stringstream bad("conic-problem v2\n");
  CHECK_THROWS_AS(read_problem(bad), ConfigError);
}

TEST_CASE("power minimisation program layout and single-user value") {
  ChannelInstance inst;
  CVector h(3);
  h << Complex(0.5, 0.5), Complex(1.0, 0.0), Complex(0.0, -0.7);
  inst.estimates = {h};
  inst.error_vars = {0.0};
  inst.noise_var = 1.3;
  const PlrSpec spec{inst, 0.2, {1.0}, ConstraintModel::aware};
  const auto problem = build_plr(spec);
  CHECK(problem.blocks.size() == 2);
  CHECK(problem.blocks[0].dim == 6);
  CHECK(problem.blocks[1].kind == ConeKind::nonneg);
  CHECK(problem.constraints.size() == 2);

  const auto sol = default_backend()->solve(problem);
  REQUIRE(sol.status == SolveStatus::optimal);
  const double oracle = 1.3 * 0.8 / (0.2 * h.squaredNorm());
  CHECK(sol.objective_value == doctest::Approx(oracle).epsilon(1e-7));

  const auto ex = extract_precoder(sol, spec);
  CHECK(ex.feasible_after_extraction);
  CHECK(ex.eigen_ratios[0] < 1e-6);
  CHECK(ex.ammse_recheck[0] == doctest::Approx(0.2).epsilon(1e-6));
  // Matched filter: the beam is parallel to h.
  const Complex proj = h.dot(ex.precoder.beam(0));
  CHECK(std::norm(proj) == doctest::Approx(h.squaredNorm() * ex.precoder.total_power()).epsilon(1e-6));

  ConicSolution failed;
  failed.status = SolveStatus::infeasible;
  CHECK_THROWS_AS(extract_precoder(failed, spec), ConfigError);
  CHECK_THROWS_AS(build_plr({inst, 1.0, {1.0}, ConstraintModel::aware}), ConfigError);
  CHECK_THROWS_AS(build_plr({inst, 0.5, {1.0, 1.0}, ConstraintModel::aware}), ConfigError);
}

TEST_CASE("feasibility floor of a two-user scenario") {
  ChannelInstance inst;
  CVector h1(2), h2(2);
  h1 << 1.0, 0.0;
  h2 << Complex(0.6, 0.0), Complex(0.0, 0.8);
  inst.estimates = {h1, h2};
  inst.error_vars = {0.1, 0.1};
  const auto backend = default_backend();
  const auto floor = probe_feasibility_floor(inst, {1.0, 1.0}, ConstraintModel::aware, *backend, 1e-3);
  REQUIRE(floor);
  CHECK(*floor > 0.0);
  CHECK(*floor < 1.0);
  // Just below the floor the program is infeasible, above it optimal.
  CHECK(backend->solve(build_plr({inst, std::max(*floor - 2e-3, 1e-4), {1.0, 1.0}})).status == SolveStatus::infeasible);
  CHECK(backend->solve(build_plr({inst, std::min(*floor + 2e-3, 0.999), {1.0, 1.0}})).status == SolveStatus::optimal);
}
