#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>
#include <complex>
#include <vector>

#include "emprop/scene.hpp"

namespace emprop {

/// 2D free-space Helmholtz Green's function for the e^{+j omega t}
/// convention: G(r, r') = -(j/4) H_0^(2)(k |r - r'|). Throws if r == r'.
std::complex<double> greens_2d(double k, const Vec2& r, const Vec2& rp);

/// MoM discretization of the kernel k^2 G(r, r') over the grid cells.
/// Off-diagonal (m, m'): k^2 * cell_area * greens_2d; diagonal: Richmond
/// equivalent-circle self term with a = sqrt(cell_area / pi):
///   (j/2) * [pi * k * a * H_1^(2)(k a) - 2j].
MatC discretize_greens(const GridRegion& grid, double k);
/// Serial reference for the OpenMP kernel above; identical output.
MatC discretize_greens_serial(const GridRegion& grid, double k);

struct TotalFieldSolver {
  Eigen::PartialPivLU<MatC> lu;
  double rcond = 0.0;

  /// Factors (I - G diag(chi)). Throws if the system is non-physical
  /// (condition estimate > 1e12).
  TotalFieldSolver(const MatC& greens, const VecC& chi);
  MatC solve(const MatC& incident) const { return lu.solve(incident); }
};

/// E_t = (I - G diag(chi))^{-1} E_i with iterative refinement so the
/// residual stays below 1e-10 * ||E_i||.
VecC total_field(const MatC& greens, const VecC& chi, const VecC& incident);

/// J = diag(chi) E_t.
VecC contrast_source(const VecC& chi, const VecC& total);

/// H1 (M x N_t): entry (m, n) = greens_2d(k, grid point m, UE antenna n).
MatC radiation_ue(const GridRegion& grid, const UEConfig& ue, double k);

/// H2 (N_r x M): entry (r, m) = k^2 * cell_area * greens_2d(k, BS antenna r,
/// grid point m). The kernel normalization matches discretize_greens so the
/// scattered-field composition is dimensionally consistent.
MatC radiation_bs(const GridRegion& grid, const BSConfig& bs, double k);

/// H2 diag(chi) (I - G diag chi)^{-1} H1.
MatC forward_channel(const MatC& h2, const VecC& chi, const MatC& greens,
                     const MatC& h1);

/// Precomputed per-scenario channel operators. Green's matrices are built
/// on demand (they are the one per-k quantity too large to keep around).
struct ForwardModel {
  const Scenario* scenario = nullptr;
  // h1[k][u]: M x N_t, h2[k][l]: N_r x M, p[k][l]: N_r x N_r,
  // ph2[k][l] = p * h2. k, u, l zero-based here; subcarrier k index 1-based
  // maps to slot k-1.
  std::vector<std::vector<MatC>> h1, h2, p, ph2;
  // hbar1[k]: M x (U * I), equivalent channels [H1 W]_u concatenated.
  // Empty until set_pilots is called.
  std::vector<MatC> hbar1;

  static ForwardModel build(const Scenario& sc);
  void set_pilots(const std::vector<std::vector<MatC>>& pilots);  // [k][u] N_t x I
  MatC greens(int k_slot) const;

  int n_bs() const { return static_cast<int>(scenario->bss.size()); }
  int n_ue() const { return static_cast<int>(scenario->ues.size()); }
  int n_k() const { return scenario->subcarriers.K; }
  int grid_size() const { return scenario->region.size(); }
};

struct Measurements {
  // y[k][l]: complex U*I*N_r vector.
  std::vector<std::vector<VecC>> y;
  double signal_power = 0.0;  // total noiseless power over all (k, l)
  double noise_sigma2 = 0.0;  // per-component variance of n_hat
};

/// Synthesizes beamformed pilot measurements for the true property vector.
/// Noise is drawn per (k, l) from an independent stream derived from the
/// seed, beamformed through P, and calibrated so that
/// signal_power / E[noise power] = 10^(snr_db / 10) over all (k, l).
/// snr_db = +inf disables noise. Throws if any pilot violates its power
/// budget.
Measurements synthesize_measurements(const ForwardModel& fm,
                                     const Eigen::VectorXd& s_true,
                                     const std::vector<std::vector<MatC>>& pilots,
                                     double snr_db, std::uint64_t seed);

}  // namespace emprop
