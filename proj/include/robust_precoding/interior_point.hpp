#pragma once

#include "robust_precoding/conic.hpp"

namespace rbp {

/// Primal-dual interior-point method on the homogeneous self-dual embedding
/// of a ConicProblem, with HKM search directions and Mehrotra
/// predictor-corrector steps. Infeasibility is reported only from an
/// approximate Farkas certificate; anything else that stalls is a
/// numerical_failure.
class InteriorPointBackend final : public ConicBackend {
 public:
  explicit InteriorPointBackend(SolverSettings settings = {}) : settings_(settings) {}

  std::string name() const override { return "hsd-interior-point"; }
  const SolverSettings& settings() const override { return settings_; }
  ConicSolution solve(const ConicProblem& problem) const override;

 private:
  SolverSettings settings_;
};

}  // namespace rbp
