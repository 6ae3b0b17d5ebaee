#include "robust_precoding/interior_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rbp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Iterate storage: symmetric PSD blocks plus one vector for every
// nonnegative coordinate (user nonneg blocks followed by inequality slacks).
struct Blocks {
  std::vector<RMatrix> psd;
  RVector lp;

  Blocks like_zero() const {
    Blocks z;
    z.psd.reserve(psd.size());
    for (const auto& m : psd) z.psd.push_back(RMatrix::Zero(m.rows(), m.cols()));
    z.lp = RVector::Zero(lp.size());
    return z;
  }

  static Blocks identity(const std::vector<int>& dims, Eigen::Index lp_size) {
    Blocks b;
    for (int d : dims) b.psd.push_back(RMatrix::Identity(d, d));
    b.lp = RVector::Ones(lp_size);
    return b;
  }

  Blocks& axpy(double a, const Blocks& o) {
    for (std::size_t i = 0; i < psd.size(); ++i) psd[i] += a * o.psd[i];
    lp += a * o.lp;
    return *this;
  }

  Blocks& scale(double a) {
    for (auto& m : psd) m *= a;
    lp *= a;
    return *this;
  }

  double norm() const {
    double s = lp.squaredNorm();
    for (const auto& m : psd) s += m.squaredNorm();
    return std::sqrt(s);
  }
};

double inner(const Blocks& a, const Blocks& b) {
  double s = a.lp.dot(b.lp);
  for (std::size_t i = 0; i < a.psd.size(); ++i) s += a.psd[i].cwiseProduct(b.psd[i]).sum();
  return s;
}

struct Data {
  std::vector<int> dims;
  Eigen::Index lp_size = 0;
  Blocks c;
  std::vector<Blocks> a;
  RVector b;
  RVector row_scale;
  std::vector<std::size_t> kept;  // original index of each stored constraint
  double c_scale = 1.0;
};

RVector apply_a(const Data& d, const Blocks& x) {
  RVector out(static_cast<Eigen::Index>(d.a.size()));
  for (std::size_t i = 0; i < d.a.size(); ++i) out[static_cast<Eigen::Index>(i)] = inner(d.a[i], x);
  return out;
}

Blocks apply_at(const Data& d, const RVector& y) {
  Blocks out = d.c.like_zero();
  for (std::size_t i = 0; i < d.a.size(); ++i) out.axpy(y[static_cast<Eigen::Index>(i)], d.a[i]);
  return out;
}

// X Z S^-1 per block (not symmetrised).
Blocks x_z_sinv(const Blocks& x, const Blocks& z, const std::vector<RMatrix>& s_inv, const RVector& s_lp) {
  Blocks out;
  out.psd.reserve(x.psd.size());
  for (std::size_t i = 0; i < x.psd.size(); ++i) out.psd.push_back(x.psd[i] * z.psd[i] * s_inv[i]);
  out.lp = x.lp.cwiseProduct(z.lp).cwiseQuotient(s_lp);
  return out;
}

Blocks symmetrised(Blocks m) {
  for (auto& p : m.psd) p = (0.5 * (p + p.transpose())).eval();
  return m;
}

// Largest step t with M + t dM in the cone (kInf when unbounded).
double max_step(const Blocks& m, const Blocks& dm, bool& ok) {
  double step = kInf;
  for (std::size_t i = 0; i < m.psd.size(); ++i) {
    Eigen::LLT<RMatrix> llt(m.psd[i]);
    if (llt.info() != Eigen::Success) {
      ok = false;
      return 0.0;
    }
    const RMatrix l_inv_dm = llt.matrixL().solve(dm.psd[i]);
    const RMatrix scaled = llt.matrixL().solve(l_inv_dm.transpose());
    const RMatrix sym = 0.5 * (scaled + scaled.transpose());
    const double lmin = Eigen::SelfAdjointEigenSolver<RMatrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()[0];
    if (lmin < 0.0) step = std::min(step, -1.0 / lmin);
  }
  for (Eigen::Index j = 0; j < m.lp.size(); ++j)
    if (dm.lp[j] < 0.0) step = std::min(step, -m.lp[j] / dm.lp[j]);
  return step;
}

Data build_data(const ConicProblem& problem, std::vector<int>& psd_of_block, std::vector<Eigen::Index>& lp_of_block,
                bool& trivially_infeasible) {
  Data d;
  trivially_infeasible = false;
  psd_of_block.assign(problem.blocks.size(), -1);
  lp_of_block.assign(problem.blocks.size(), -1);
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const auto& spec = problem.blocks[b];
    if (spec.kind == ConeKind::psd) {
      psd_of_block[b] = static_cast<int>(d.dims.size());
      d.dims.push_back(spec.dim);
    } else {
      lp_of_block[b] = d.lp_size;
      d.lp_size += spec.dim;
    }
  }
  const Eigen::Index user_lp = d.lp_size;
  for (const auto& c : problem.constraints)
    if (c.sense != Sense::eq) ++d.lp_size;

  auto to_blocks = [&](const std::vector<RMatrix>& dense) {
    Blocks out;
    out.lp = RVector::Zero(d.lp_size);
    for (std::size_t b = 0; b < dense.size(); ++b) {
      if (psd_of_block[b] >= 0) out.psd.push_back(dense[b]);
      else out.lp.segment(lp_of_block[b], dense[b].rows()) = dense[b].diagonal();
    }
    return out;
  };

  d.c = to_blocks(problem.dense(problem.objective));
  Eigen::Index slack = user_lp;
  std::vector<double> rhs;
  for (const auto& c : problem.constraints) {
    Blocks ai = to_blocks(problem.dense(c.coefficients));
    if (c.sense == Sense::le) ai.lp[slack++] = 1.0;
    else if (c.sense == Sense::ge) ai.lp[slack++] = -1.0;
    if (ai.norm() == 0.0) {
      if (c.rhs != 0.0) trivially_infeasible = true;
      // 0 = 0 carries no information and would make the Schur matrix singular.
      continue;
    }
    d.a.push_back(std::move(ai));
    d.kept.push_back(static_cast<std::size_t>(&c - problem.constraints.data()));
    rhs.push_back(c.rhs);
  }
  d.b = Eigen::Map<const RVector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));

  // Row equilibration and objective scaling.
  d.row_scale = RVector::Ones(d.b.size());
  for (std::size_t i = 0; i < d.a.size(); ++i) {
    const double s = 1.0 / d.a[i].norm();
    d.row_scale[static_cast<Eigen::Index>(i)] = s;
    d.a[i].scale(s);
    d.b[static_cast<Eigen::Index>(i)] *= s;
  }
  const double cn = d.c.norm();
  d.c_scale = cn > 0.0 ? 1.0 / cn : 1.0;
  d.c.scale(d.c_scale);
  return d;
}

}  // namespace

ConicSolution InteriorPointBackend::solve(const ConicProblem& problem) const {
  problem.validate();
  const SolverSettings& cfg = settings_;

  std::vector<int> psd_of_block;
  std::vector<Eigen::Index> lp_of_block;
  bool trivially_infeasible = false;
  const Data d = build_data(problem, psd_of_block, lp_of_block, trivially_infeasible);

  ConicSolution sol;
  if (trivially_infeasible) {
    sol.status = SolveStatus::infeasible;
    sol.stats.detail = "constraint 0 = rhs with rhs != 0";
    return sol;
  }

  const auto m = d.b.size();
  double nu = static_cast<double>(d.lp_size);
  for (int dim : d.dims) nu += dim;

  Blocks x = Blocks::identity(d.dims, d.lp_size);
  Blocks s = Blocks::identity(d.dims, d.lp_size);
  RVector y = RVector::Zero(m);
  double tau = 1.0;
  double kappa = 1.0;

  const double b_norm = d.b.norm();
  const double c_norm = d.c.norm();
  int small_steps = 0;

  auto finish = [&](SolveStatus status, int iter, double pres, double dres, double gap, std::string detail) {
    sol.status = status;
    sol.stats.iterations = iter;
    sol.stats.primal_residual = pres;
    sol.stats.dual_residual = dres;
    sol.stats.gap = gap;
    sol.stats.detail = std::move(detail);
    const double inv_tau = status == SolveStatus::infeasible ? 1.0 : 1.0 / tau;
    sol.blocks.clear();
    for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
      if (psd_of_block[b] >= 0) {
        sol.blocks.push_back(x.psd[static_cast<std::size_t>(psd_of_block[b])] * inv_tau);
      } else {
        const int dim = problem.blocks[b].dim;
        sol.blocks.push_back(x.lp.segment(lp_of_block[b], dim).asDiagonal().toDenseMatrix() * inv_tau);
      }
    }
    sol.duals = RVector::Zero(static_cast<Eigen::Index>(problem.constraints.size()));
    for (std::size_t i = 0; i < d.kept.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      sol.duals[static_cast<Eigen::Index>(d.kept[i])] = y[k] * d.row_scale[k] * inv_tau / d.c_scale;
    }
    const auto c_orig = problem.dense(problem.objective);
    sol.objective_value = ConicProblem::inner(c_orig, sol.blocks);
    sol.dual_objective = d.b.dot(y) * inv_tau / d.c_scale;
    return sol;
  };

  for (int iter = 0;; ++iter) {
    const RVector ax = apply_a(d, x);
    const Blocks aty = apply_at(d, y);
    const RVector rp = tau * d.b - ax;
    Blocks rd = d.c;
    rd.scale(tau).axpy(-1.0, aty).axpy(-1.0, s);
    const double cx = inner(d.c, x);
    const double by = d.b.dot(y);
    const double rg = by - cx - kappa;
    const double mu = (inner(x, s) + tau * kappa) / (nu + 1.0);

    const double pobj = cx / tau;
    const double dobj = by / tau;
    const double pres = rp.norm() / tau / (1.0 + b_norm);
    const double dres = rd.norm() / tau / (1.0 + c_norm);
    const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    if (pres <= cfg.feasibility_tol && dres <= cfg.feasibility_tol && gap <= cfg.gap_tol)
      return finish(SolveStatus::optimal, iter, pres, dres, gap, "");

    // Approximate Farkas certificates (scale-free in tau).
    if (by > 0.0) {
      Blocks ray = aty;
      ray.axpy(1.0, s);
      if (ray.norm() / by <= cfg.infeasibility_tol)
        return finish(SolveStatus::infeasible, iter, pres, dres, gap, "primal infeasible (dual ray)");
    }
    if (cx < 0.0 && ax.norm() / (-cx) <= cfg.infeasibility_tol)
      return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "dual infeasible (unbounded primal)");

    if (iter >= cfg.max_iterations)
      return finish(SolveStatus::iteration_limit, iter, pres, dres, gap, "iteration limit");

    // Factorisations shared by predictor and corrector.
    std::vector<RMatrix> s_inv;
    s_inv.reserve(s.psd.size());
    for (const auto& blk : s.psd) {
      Eigen::LLT<RMatrix> llt(blk);
      if (llt.info() != Eigen::Success)
        return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "dual slack lost definiteness");
      s_inv.push_back(llt.solve(RMatrix::Identity(blk.rows(), blk.cols())));
    }
    const RVector& s_lp = s.lp;

    RMatrix schur(m, m);
    std::vector<Blocks> xas(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) xas[static_cast<std::size_t>(j)] = x_z_sinv(x, d.a[static_cast<std::size_t>(j)], s_inv, s_lp);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double v = inner(d.a[static_cast<std::size_t>(i)], xas[static_cast<std::size_t>(j)]);
        schur(i, j) = v;
        schur(j, i) = v;
      }
    Eigen::LDLT<RMatrix> ldlt(schur);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      schur.diagonal().array() += 1e-14 * std::max(1.0, schur.diagonal().maxCoeff());
      ldlt.compute(schur);
      if (ldlt.info() != Eigen::Success)
        return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "Schur complement factorisation failed");
    }

    const Blocks xcs = x_z_sinv(x, d.c, s_inv, s_lp);
    const RVector a_c = apply_a(d, xcs);
    const double c_xcs = inner(d.c, xcs);
    const RVector v = ldlt.solve(a_c + d.b);
    const double denom = d.b.dot(v) - a_c.dot(v) + c_xcs + kappa / tau;
    const Blocks x_rd_s = x_z_sinv(x, rd, s_inv, s_lp);

    struct Direction {
      Blocks dx, ds;
      RVector dy;
      double dtau = 0.0, dkappa = 0.0;
    };

    // w: complementarity target term W, w_kappa: its counterpart for (tau, kappa).
    auto direction = [&](double eta, const Blocks& w, double w_kappa) {
      Blocks z = w;
      z.axpy(-eta, x_rd_s);
      const RVector u = ldlt.solve(eta * rp - apply_a(d, z));
      Direction dir;
      dir.dtau = (-eta * rg - d.b.dot(u) + a_c.dot(u) + inner(d.c, z) + w_kappa) / denom;
      dir.dy = u + dir.dtau * v;
      dir.ds = rd;
      dir.ds.scale(eta).axpy(-1.0, apply_at(d, dir.dy)).axpy(dir.dtau, d.c);
      Blocks dx = w;
      dx.axpy(-1.0, x_z_sinv(x, dir.ds, s_inv, s_lp));
      dir.dx = symmetrised(std::move(dx));
      dir.dkappa = w_kappa - kappa / tau * dir.dtau;
      return dir;
    };

    auto step_to_boundary = [&](const Direction& dir, bool& ok) {
      double t = std::min(max_step(x, dir.dx, ok), max_step(s, dir.ds, ok));
      if (dir.dtau < 0.0) t = std::min(t, -tau / dir.dtau);
      if (dir.dkappa < 0.0) t = std::min(t, -kappa / dir.dkappa);
      return t;
    };

    // Predictor.
    Blocks w_aff = x;
    w_aff.scale(-1.0);
    const Direction aff = direction(1.0, w_aff, -kappa);
    bool ok = true;
    const double t_aff = std::min(1.0, step_to_boundary(aff, ok));
    if (!ok) return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "iterate left the cone");

    Blocks x_aff = x;
    x_aff.axpy(t_aff, aff.dx);
    Blocks s_aff = s;
    s_aff.axpy(t_aff, aff.ds);
    const double mu_aff =
        (inner(x_aff, s_aff) + (tau + t_aff * aff.dtau) * (kappa + t_aff * aff.dkappa)) / (nu + 1.0);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    // Corrector: W = sigma mu S^-1 - X - dXa dSa S^-1.
    Blocks w = x;
    w.scale(-1.0);
    for (std::size_t i = 0; i < w.psd.size(); ++i)
      w.psd[i] += sigma * mu * s_inv[i] - aff.dx.psd[i] * aff.ds.psd[i] * s_inv[i];
    w.lp += (sigma * mu * RVector::Ones(s_lp.size()) - aff.dx.lp.cwiseProduct(aff.ds.lp)).cwiseQuotient(s_lp);
    const double w_kappa = (sigma * mu - tau * kappa - aff.dtau * aff.dkappa) / tau;
    const Direction dir = direction(1.0 - sigma, w, w_kappa);

    const double t_max = step_to_boundary(dir, ok);
    if (!ok) return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "iterate left the cone");
    const double t = std::min(1.0, 0.98 * t_max);

    if (t < 1e-10) {
      if (++small_steps >= 3)
        return finish(SolveStatus::numerical_failure, iter, pres, dres, gap, "step length stalled");
    } else {
      small_steps = 0;
    }

    x.axpy(t, dir.dx);
    s.axpy(t, dir.ds);
    y += t * dir.dy;
    tau += t * dir.dtau;
    kappa += t * dir.dkappa;

  }
}

std::shared_ptr<const ConicBackend> default_backend(const SolverSettings& settings) {
  return std::make_shared<InteriorPointBackend>(settings);
}

}  // namespace rbp
