#pragma once

#include <functional>
#include <string>
#include <vector>

#include "emprop/group_sparse.hpp"

namespace emprop {

struct MaceState {
  MatR s;  // 2M x L, per-BS reconstruction columns
  MatR q;  // 2M x L, fixed-point variable
};

struct MannHistoryRow {
  int outer_iter = 0;
  int mann_iter = 0;
  double delta_q = 0.0;
  std::vector<double> data_fidelity;  // per-BS 1/2 ||z - E s_l||^2
  double consensus_nmse_db = 0.0;     // only meaningful when truth is known
};

struct MannResult {
  VecR consensus;            // s* = row mean of S*
  MatR s_star;               // S* = (2G - I) Q*
  bool converged = false;
  int iters = 0;
  long mann_iters_total = 0;
  std::vector<MannHistoryRow> history;
};

/// Every column of G(S) is the column mean of S; idempotent.
MatR averaging(const MatR& s);

/// (2G - I): right-multiplication by the Householder matrix
/// (2/L) 1 1^T - I; involutive and norm preserving.
MatR reflect_g(const MatR& q);

/// F(S): column l = prox of agent l at column l. Columns are independent
/// and evaluated in parallel.
MatR agent_apply(std::vector<ProxAgent>& agents, const MatR& s);

struct MannOptions {
  double rho = 0.5;
  double eps = -1.0;  // < 0: default 1e-6 * sqrt(2 M L)
  int max_outer = 500;
  // Truth for NMSE logging; empty to skip.
  VecR s_truth;
  double omega_c = 0.0;
};

/// Mann iteration Q <- rho (2F - I)(2G - I) Q + (1 - rho) Q from the given
/// initial stack S0 until ||dQ||_F < eps.
MannResult mann_solve(std::vector<ProxAgent>& agents, const MatR& s0,
                      const MannOptions& opts);

enum class SensingUpdateMode {
  kPerMannIteration,  // refresh the sensing matrices inside the Mann loop
  kPerMannSolve,      // classic BIM: refresh after each converged Mann solve
};

enum class SensingUpdateSource {
  kConsensusMean,  // all BSs rebuild from the consensus mean
  kOwnColumn,      // each BS rebuilds from its own column
};

struct BimOptions {
  MannOptions mann;
  SensingUpdateMode mode = SensingUpdateMode::kPerMannIteration;
  SensingUpdateSource source = SensingUpdateSource::kConsensusMean;
  int n_bim = 5;
  double eps_bim = 1e-4;
  double lambda_fraction = 0.05;
  // When false the sensing matrices stay at the Born approximation for the
  // whole solve (n_bim and mode are then irrelevant).
  bool refine = true;
  std::string log_csv_path;  // per-iteration convergence log; empty = off
};

struct BimResult {
  VecR consensus;
  bool converged = false;
  int bim_iters = 0;
  long mann_iters_total = 0;
  long overhead_reals = 0;  // 2M x total Mann iterations
  std::vector<MannHistoryRow> history;
};

/// Rebuilds agent l's normal equations at the estimate s (one call per BS).
using SystemBuilder =
    std::function<NormalEquations(int l, const VecR& s_est)>;

/// Born-iterative outer loop around the Mann fixed-point solve. The
/// builder produces per-BS normal equations from a property estimate
/// (Born form for a zero estimate). On a forward-model singularity at an
/// intermediate estimate the update is halved and retried once.
BimResult bim_outer(std::vector<ProxAgent>& agents,
                    const SystemBuilder& builder, const BimOptions& opts);

void write_history_csv(const std::string& path,
                       const std::vector<MannHistoryRow>& history);

}  // namespace emprop
