#pragma once

#include <string>
#include <vector>

#include "emprop/scene.hpp"

namespace emprop {

struct PilotMatrix {
  MatC w;            // N_t x I pilot pattern
  double xi = 0.0;   // pattern power scale, I * xi >= p_bar
  double objective = 0.0;
  bool infeasible = false;  // p_bar unreachable under the power budget
  int iters = 0;
  // p(W, xi) after each accepted Armijo step of the winning restart,
  // starting with the initial value.
  std::vector<double> objective_history;
};

struct PilotParams {
  double gamma = 1.0;       // cross-subcarrier coherence weight
  double power = 1.0;       // Frobenius power budget P
  double p_bar = 0.0;       // minimum region power, 0 = inactive
  double armijo_c = 1e-4;
  double armijo_beta = 0.5;
  double init_step = 1.0;
  double tol = 1e-8;        // relative objective change
  int max_iters = 500;
  int restarts = 3;
  std::uint64_t seed = 0;
};

/// p(W, xi) = ||W^H H1^H H1 W - xi I||_F^2 + gamma ||A^H H1 W||_F^2.
/// A may have zero columns (first subcarrier).
double pilot_objective(const MatC& w, double xi, const MatC& h1,
                       const MatC& a, double gamma);

/// Conjugate Wirtinger gradient of the objective:
/// 2 H1^H H1 W (W^H H1^H H1 W - xi I) + gamma H1^H A A^H H1 W.
MatC wirtinger_grad(const MatC& w, double xi, const MatC& h1, const MatC& a,
                    double gamma);

/// Projected gradient descent with Armijo backtracking, Frobenius-ball
/// projection, and closed-form xi update; best of `restarts` random
/// initializations on the power boundary.
PilotMatrix pgd_design(const MatC& h1, const MatC& a, int n_symbols,
                       const PilotParams& params);

/// Sequential per-subcarrier design for one UE: subcarrier k sees the
/// accumulated region patterns H1_j W_j of every j < k.
std::vector<PilotMatrix> design_all(const std::vector<MatC>& h1_per_k,
                                    int n_symbols,
                                    const PilotParams& params);

/// Largest off-diagonal normalized Gram magnitude of H1 W; the quantity the
/// first objective term suppresses.
double max_coherence(const MatC& h1, const MatC& w);

/// Text dump: "K N_t I" header line, then one "re im" pair per line in
/// row-major order per subcarrier.
void save_pilots(const std::string& path,
                 const std::vector<std::vector<PilotMatrix>>& pilots);
std::vector<std::vector<MatC>> load_pilots(const std::string& path);

}  // namespace emprop
