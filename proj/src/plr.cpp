#include "robust_precoding/plr.hpp"

#include <cmath>

namespace rbp {

namespace {

// Matrix S_k on the useful-signal side of user k's constraint.
CMatrix signal_matrix(const PlrSpec& spec, int k) {
  if (spec.model == ConstraintModel::aware) return spec.instance.channel_correlation(k);
  const auto& h = spec.instance.estimates[static_cast<std::size_t>(k)];
  return h * h.adjoint();
}

double alpha_of(const PlrSpec& spec, int k) {
  return spec.model == ConstraintModel::aware ? spec.alphas[static_cast<std::size_t>(k)] : 1.0;
}

}  // namespace

void PlrSpec::validate() const {
  instance.validate();
  if (!(epsilon_target > 0.0 && epsilon_target < 1.0)) throw ConfigError("AMMSE target must lie in (0, 1)");
  if (model == ConstraintModel::aware) {
    if (alphas.size() != static_cast<std::size_t>(instance.num_users()))
      throw ConfigError("one alpha per user required");
    for (double a : alphas)
      if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("alphas must be positive");
  }
}

ConicProblem build_plr(const PlrSpec& spec) {
  spec.validate();
  const int users = spec.instance.num_users();
  const int n = spec.instance.num_antennas();

  ConicProblem p;
  for (int k = 0; k < users; ++k) p.blocks.push_back({ConeKind::psd, 2 * n});
  p.blocks.push_back({ConeKind::nonneg, 1});
  const int p0 = users;

  p.objective.push_back({p0, 0, 0, 1.0});

  // Embedded traces are twice the complex ones, hence the 1/2 factors.
  LinearConstraint power;
  power.sense = Sense::le;
  power.rhs = 0.0;
  for (int k = 0; k < users; ++k)
    for (int r = 0; r < 2 * n; ++r) power.coefficients.push_back({k, r, r, 0.5});
  power.coefficients.push_back({p0, 0, 0, -1.0});
  p.constraints.push_back(std::move(power));

  const double gain = 1.0 / (1.0 - spec.epsilon_target);
  for (int k = 0; k < users; ++k) {
    const CMatrix a_k = spec.instance.channel_correlation(k);
    const CMatrix own = a_k - alpha_of(spec, k) * gain * signal_matrix(spec, k);
    LinearConstraint c;
    c.sense = Sense::le;
    c.rhs = -spec.instance.noise_var;
    for (int i = 0; i < users; ++i) append_embedded(c.coefficients, i, i == k ? own : a_k, 0.5);
    p.constraints.push_back(std::move(c));
  }
  return p;
}

GramSet plr_gram(const ConicSolution& solution, const PlrSpec& spec, double tol_psd) {
  const auto users = static_cast<std::size_t>(spec.instance.num_users());
  if (solution.blocks.size() != users + 1) throw ConfigError("solution does not match the P_lr layout");
  std::vector<CMatrix> q;
  q.reserve(users);
  for (std::size_t k = 0; k < users; ++k) q.push_back(unembed_hermitian(solution.blocks[k]));
  return GramSet::from_matrices(std::move(q), tol_psd);
}

std::vector<double> plr_violations(const PlrSpec& spec, const GramSet& gram) {
  const int users = spec.instance.num_users();
  const double gain = 1.0 / (1.0 - spec.epsilon_target);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(users));
  for (int k = 0; k < users; ++k) {
    const double t_bar = expected_T(spec.instance, gram, k);
    const double useful =
        (gram.per_user[static_cast<std::size_t>(k)] * signal_matrix(spec, k)).trace().real();
    out.push_back((t_bar - alpha_of(spec, k) * gain * useful) / t_bar);
  }
  return out;
}

std::vector<double> plr_model_ammse(const PlrSpec& spec, const GramSet& gram) {
  const int users = spec.instance.num_users();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(users));
  for (int k = 0; k < users; ++k) {
    const double t_bar = expected_T(spec.instance, gram, k);
    const double useful =
        (gram.per_user[static_cast<std::size_t>(k)] * signal_matrix(spec, k)).trace().real();
    out.push_back(1.0 - alpha_of(spec, k) * useful / t_bar);
  }
  return out;
}

ExtractionReport extract_precoder(const ConicSolution& solution, const PlrSpec& spec,
                                  const SolverSettings& settings) {
  if (solution.status != SolveStatus::optimal)
    throw ConfigError(std::string("cannot extract a precoder from a ") + to_string(solution.status) + " solution");
  ExtractionReport report;
  report.relaxed = plr_gram(solution, spec, settings.tol_psd);

  const int users = spec.instance.num_users();
  const int n = spec.instance.num_antennas();
  CMatrix p(n, users);
  for (int k = 0; k < users; ++k) {
    const auto& q = report.relaxed.per_user[static_cast<std::size_t>(k)];
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(q);
    const auto& lambda = eig.eigenvalues();  // ascending
    const double l1 = lambda[n - 1];
    if (l1 < -settings.tol_psd) throw NumericalError("relaxed Gram matrix has a negative leading eigenvalue");
    const double l2 = n > 1 ? std::max(lambda[n - 2], 0.0) : 0.0;
    report.eigen_ratios.push_back(l1 > 0.0 ? std::min(l2 / l1, 1.0) : 0.0);
    p.col(k) = std::sqrt(std::max(l1, 0.0)) * eig.eigenvectors().col(n - 1);
  }
  report.precoder = Precoder(std::move(p));

  const GramSet rank_one = GramSet::from_precoder(report.precoder);
  report.ammse_recheck = plr_model_ammse(spec, rank_one);
  report.violations = plr_violations(spec, rank_one);
  const double tol = 10.0 * std::max(settings.gap_tol, settings.feasibility_tol);
  report.feasible_after_extraction = true;
  for (double v : report.violations)
    if (v > tol) report.feasible_after_extraction = false;
  return report;
}

std::optional<double> probe_feasibility_floor(const ChannelInstance& instance, const std::vector<double>& alphas,
                                              ConstraintModel model, const ConicBackend& backend, double width) {
  PlrSpec spec{instance, 0.5, alphas, model};
  double lo = 0.0;
  double hi = 1.0;
  std::optional<double> best;
  while (hi - lo > width) {
    spec.epsilon_target = 0.5 * (lo + hi);
    const auto sol = backend.solve(build_plr(spec));
    if (sol.status == SolveStatus::optimal) {
      best = spec.epsilon_target;
      hi = spec.epsilon_target;
    } else if (sol.status == SolveStatus::infeasible) {
      lo = spec.epsilon_target;
    } else {
      throw NumericalError(std::string("feasibility probe: solver returned ") + to_string(sol.status));
    }
  }
  return best;
}

}  // namespace rbp
