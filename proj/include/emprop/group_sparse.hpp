#pragma once

#include <Eigen/Cholesky>
#include <memory>
#include <optional>

#include "emprop/sensing_model.hpp"

namespace emprop {

struct ProxParams {
  double lambda = 0.0;      // group-lasso regularization weight
  double zeta = 1.0;        // agent weight, sum over agents = 1
  double sigma2 = 1.0;      // consensus scale sigma^2
  double eta = 1.0;         // ADMM penalty
  double tol = 1e-8;        // relative stopping tolerance
  int max_iters = 2000;

  void validate() const;
};

/// MAP cost h_l(s) = 1/2 ||z - E s||^2 + lambda * sum_m sqrt(s_m^2 + s_{m+M}^2).
/// Throws on negative s (outside the feasible set).
double map_cost(const MatR& e, const VecR& z, const VecR& s, double lambda);
double map_cost(const NormalEquations& ne, const VecR& s, double lambda);

/// Mixed l(1,2) norm: sum over pixel groups of the pair 2-norm.
double group_norm(const VecR& s);

/// Nonnegative group shrinkage: max{0, (1 - tau / max(||c||, tau)) c}
/// elementwise.
Eigen::Vector2d group_threshold(const Eigen::Vector2d& c, double tau);

struct AdmmResult {
  VecR s;
  bool converged = false;
  int iters = 0;
};

/// Per-BS proximal agent. Owns the cached factorization of
/// (E^T E + I / eta), which stays valid for as long as the sensing matrix
/// does, plus warm-start state reused across consecutive prox calls.
class ProxAgent {
 public:
  ProxAgent(NormalEquations ne, ProxParams params);

  /// Rebuilds the normal equations (new sensing matrix) and refactors.
  void reset_system(NormalEquations ne);
  void set_lambda(double lambda) { params_.lambda = lambda; }
  void clear_warm_start();

  /// F_l(s_ref): proximal mapping of sigma^2 zeta h_l at s_ref, evaluated
  /// by ADMM with nonnegative group soft-thresholding. The output is
  /// clamped at zero.
  AdmmResult prox(const VecR& s_ref);

  /// MAP estimate argmin h_l over s >= 0 (no proximity term); used for the
  /// Born initial reconstruction.
  AdmmResult map_estimate();

  const NormalEquations& system() const { return ne_; }
  const ProxParams& params() const { return params_; }
  double map_cost_at(const VecR& s) const {
    return map_cost(ne_, s, params_.lambda);
  }

 private:
  AdmmResult run(const VecR& s_ref, double sigma2_zeta);

  NormalEquations ne_;
  ProxParams params_;
  Eigen::LLT<MatR> llt_;
  std::optional<VecR> warm_a_, warm_b_;
};

/// Default regularization: fraction of the smallest lambda that zeroes the
/// solution, measured on the group norms of E^T z.
double default_lambda(const NormalEquations& ne, double fraction = 0.05);

}  // namespace emprop
