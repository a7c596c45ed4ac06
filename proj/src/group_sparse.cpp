#include "emprop/group_sparse.hpp"

#include <cmath>
#include <stdexcept>

namespace emprop {

void ProxParams::validate() const {
  if (lambda < 0.0 || zeta <= 0.0 || zeta > 1.0 || sigma2 <= 0.0 ||
      eta <= 0.0 || tol <= 0.0 || max_iters < 1)
    throw std::invalid_argument("ProxParams: invalid parameter");
}

double group_norm(const VecR& s) {
  const int m_count = static_cast<int>(s.size()) / 2;
  double sum = 0.0;
  for (int m = 0; m < m_count; ++m)
    sum += std::hypot(s[m], s[m + m_count]);
  return sum;
}

double map_cost(const MatR& e, const VecR& z, const VecR& s, double lambda) {
  if ((s.array() < 0.0).any())
    throw std::invalid_argument("map_cost: s outside the feasible set");
  return 0.5 * (z - e * s).squaredNorm() + lambda * group_norm(s);
}

double map_cost(const NormalEquations& ne, const VecR& s, double lambda) {
  if ((s.array() < 0.0).any())
    throw std::invalid_argument("map_cost: s outside the feasible set");
  return 0.5 * ne.residual_sq(s) + lambda * group_norm(s);
}

Eigen::Vector2d group_threshold(const Eigen::Vector2d& c, double tau) {
  if (tau < 0.0) throw std::invalid_argument("group_threshold: tau >= 0");
  const double factor = 1.0 - tau / std::max(c.norm(), tau);
  return (factor * c).cwiseMax(0.0);
}

ProxAgent::ProxAgent(NormalEquations ne, ProxParams params)
    : ne_(std::move(ne)), params_(params) {
  params_.validate();
  reset_system(std::move(ne_));
}

void ProxAgent::reset_system(NormalEquations ne) {
  ne_ = std::move(ne);
  MatR sys = ne_.gram;
  sys.diagonal().array() += 1.0 / params_.eta;
  llt_.compute(sys);
  if (llt_.info() != Eigen::Success)
    throw std::runtime_error("ProxAgent: factorization failed");
}

void ProxAgent::clear_warm_start() {
  warm_a_.reset();
  warm_b_.reset();
}

AdmmResult ProxAgent::prox(const VecR& s_ref) {
  if (!s_ref.allFinite())
    throw std::invalid_argument("ProxAgent::prox: non-finite input");
  return run(s_ref, params_.sigma2 * params_.zeta);
}

AdmmResult ProxAgent::map_estimate() {
  // sigma^2 zeta -> inf removes the proximity term; 1e12 is far beyond the
  // data-term scale of any system handled here.
  return run(VecR::Zero(ne_.beta.size()), 1e12);
}

AdmmResult ProxAgent::run(const VecR& s_ref, double sigma2_zeta) {
  const int two_m = static_cast<int>(ne_.beta.size());
  const int m_count = two_m / 2;
  const double eta = params_.eta;
  const double lambda = params_.lambda;
  // Exact nonnegative group prox: clamp the anchor to the orthant, then
  // shrink. The shrink threshold on the quadratic anchor c with curvature
  // (1/eta + 1/(sigma^2 zeta)) / 2 per side works out to
  // eta sigma^2 zeta lambda / (sigma^2 zeta + eta).
  const double tau = eta * sigma2_zeta * lambda / (sigma2_zeta + eta);
  const double mix_v = sigma2_zeta / (sigma2_zeta + eta);
  const double mix_s = eta / (sigma2_zeta + eta);

  VecR a = warm_a_ ? *warm_a_ : VecR::Zero(two_m);
  VecR b = warm_b_ ? *warm_b_ : VecR::Zero(two_m);
  VecR v(two_m);
  AdmmResult out;
  for (int n = 0; n < params_.max_iters; ++n) {
    v = llt_.solve(ne_.beta + (a - eta * b) / eta);
    const VecR a_prev = a;
    for (int m = 0; m < m_count; ++m) {
      Eigen::Vector2d c(
          mix_v * (eta * b[m] + v[m]) + mix_s * s_ref[m],
          mix_v * (eta * b[m + m_count] + v[m + m_count]) +
              mix_s * s_ref[m + m_count]);
      c = c.cwiseMax(0.0);
      const Eigen::Vector2d am = group_threshold(c, tau);
      a[m] = am[0];
      a[m + m_count] = am[1];
    }
    // Dual ascent consistent with the v- and a-updates above (anchor
    // v + eta b): the multiplier moves along +(v - a).
    b += (v - a) / eta;
    out.iters = n + 1;
    const double scale = 1.0 + a.norm();
    if (std::max((v - a).norm(), (a - a_prev).norm()) <=
        params_.tol * scale) {
      out.converged = true;
      break;
    }
  }
  warm_a_ = a;
  warm_b_ = b;
  out.s = v.cwiseMax(0.0);
  return out;
}

double default_lambda(const NormalEquations& ne, double fraction) {
  const int m_count = static_cast<int>(ne.beta.size()) / 2;
  double max_group = 0.0;
  for (int m = 0; m < m_count; ++m)
    max_group = std::max(max_group, std::hypot(ne.beta[m], ne.beta[m + m_count]));
  return fraction * max_group;
}

}  // namespace emprop
