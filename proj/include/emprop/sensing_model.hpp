#pragma once

#include <Eigen/Dense>
#include <vector>

#include "emprop/em_forward.hpp"
#include "emprop/scene.hpp"

namespace emprop {

using VecR = Eigen::VectorXd;
using MatR = Eigen::MatrixXd;

/// chi_k[m] = s[m] + j (omega_c / omega_k) s[m + M].
VecC chi_from_s(const VecR& s, double omega_k, double omega_c);

/// Complex sensing matrix D_{k,l} (UIN_r x M): column-wise Khatri-Rao of
/// Hbar1^T (I - G diag chi)^{-T} with P H2. Satisfies D chi = vec of the
/// noiseless beamformed measurements.
MatC sensing_matrix(const VecC& chi, const MatC& hbar1, const MatC& ph2,
                    const MatC& greens);

/// Born-approximation sensing matrix: Hbar1^T khatri-rao P H2; equals
/// sensing_matrix at chi = 0 exactly.
MatC born_init(const MatC& hbar1, const MatC& ph2);

/// Real-valued weighted sensing block, Eq-structure
/// E = [[Re D, -(w) Im D], [Im D, (w) Re D]] with w = omega_c / omega_k,
/// z = [Re y; Im y].
struct SensingBlock {
  MatR e;
  VecR z;
  double weight = 1.0;  // omega_c / omega_k
};

SensingBlock realify(const MatC& d, double omega_k, double omega_c,
                     const VecC& y);

/// Vertical concatenation of per-subcarrier blocks in k order.
struct StackedSystem {
  MatR e;  // 2 U I N_r K x 2M
  VecR z;  // 2 U I N_r K
};

StackedSystem stack(const std::vector<SensingBlock>& blocks);

/// Normal-equation form of a stacked per-BS system: enough to evaluate the
/// quadratic data term and to run the ADMM prox without storing the (tall)
/// stacked matrix. gram = E^T E, beta = E^T z, z_sq = ||z||^2.
struct NormalEquations {
  MatR gram;
  VecR beta;
  double z_sq = 0.0;
  long rows = 0;

  static NormalEquations zero(int two_m) {
    return {MatR::Zero(two_m, two_m), VecR::Zero(two_m), 0.0, 0};
  }
  /// Accumulates one subcarrier block directly from the complex D and y,
  /// using E^T E = [[Re C, -w Im C], [w Im C, w^2 Re C]] with C = D^H D.
  void accumulate(const MatC& d, double weight, const VecC& y);
  /// Serial reference for the parallel accumulate path.
  void accumulate_serial(const MatC& d, double weight, const VecC& y);

  static NormalEquations from_stacked(const StackedSystem& sys);

  /// Rescales the underlying (E, z) by sqrt(f): gram, beta and z_sq are all
  /// multiplied by f. The least-squares minimizer is unchanged; this is used
  /// to bring raw propagation-scaled systems to an O(1) numerical range.
  void scale(double f) {
    gram *= f;
    beta *= f;
    z_sq *= f;
  }

  double residual_sq(const VecR& s) const {
    return z_sq - 2.0 * s.dot(beta) + s.dot(gram * s);
  }
};

/// Builds the per-BS normal equations for BS l from the forward model at a
/// given property estimate (Born when s_est is zero / empty), accumulating
/// over all K subcarriers. `greens` may carry prebuilt per-k Green's
/// matrices to share across BSs; when empty and s_est is nonzero they are
/// built on the fly.
NormalEquations build_normal_equations(
    const ForwardModel& fm, int l, const Measurements& meas,
    const VecR& s_est, const std::vector<MatC>* greens = nullptr);

/// Recomputes beta / z_sq / rows for a new measurement set while keeping
/// the cached gram (the gram does not depend on the noise realization).
/// s_est must match the estimate the gram was built at.
void refresh_rhs(NormalEquations& ne, const ForwardModel& fm, int l,
                 const Measurements& meas, const VecR& s_est,
                 const std::vector<MatC>* greens = nullptr);

}  // namespace emprop
