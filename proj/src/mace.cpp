#include "emprop/mace.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "emprop/metrics.hpp"

namespace emprop {

MatR averaging(const MatR& s) {
  const VecR mean = s.rowwise().mean();
  return mean.replicate(1, s.cols());
}

MatR reflect_g(const MatR& q) {
  const VecR mean = q.rowwise().mean();
  return 2.0 * mean.replicate(1, q.cols()) - q;
}

MatR agent_apply(std::vector<ProxAgent>& agents, const MatR& s) {
  const int n_agents = static_cast<int>(agents.size());
  if (s.cols() != n_agents)
    throw std::invalid_argument("agent_apply: column/agent count mismatch");
  MatR out(s.rows(), n_agents);
  std::vector<std::string> errors(n_agents);
#pragma omp parallel for schedule(dynamic, 1)
  for (int l = 0; l < n_agents; ++l) {
    try {
      out.col(l) = agents[l].prox(s.col(l)).s;
    } catch (const std::exception& ex) {
      errors[l] = ex.what();
    }
  }
  for (int l = 0; l < n_agents; ++l)
    if (!errors[l].empty())
      throw std::runtime_error("agent " + std::to_string(l + 1) + ": " +
                               errors[l]);
  return out;
}

namespace {
MannHistoryRow make_row(std::vector<ProxAgent>& agents, const MatR& s,
                        int outer, int mann, double dq,
                        const MannOptions& opts) {
  MannHistoryRow row;
  row.outer_iter = outer;
  row.mann_iter = mann;
  row.delta_q = dq;
  row.data_fidelity.reserve(agents.size());
  for (size_t l = 0; l < agents.size(); ++l)
    row.data_fidelity.push_back(
        0.5 * agents[l].system().residual_sq(s.col(l).cwiseMax(0.0)));
  if (opts.s_truth.size() > 0)
    row.consensus_nmse_db =
        nmse_db(opts.s_truth, s.rowwise().mean().cwiseMax(0.0));
  return row;
}
}  // namespace

MannResult mann_solve(std::vector<ProxAgent>& agents, const MatR& s0,
                      const MannOptions& opts) {
  if (!(opts.rho > 0.0 && opts.rho < 1.0))
    throw std::invalid_argument("mann_solve: rho must lie in (0, 1)");
  const long two_m = s0.rows();
  const int n_agents = static_cast<int>(agents.size());
  const double eps = opts.eps > 0.0
                         ? opts.eps
                         : 1e-6 * std::sqrt(double(two_m) * n_agents);
  MatR q = reflect_g(s0);
  MannResult out;
  for (int it = 0; it < opts.max_outer; ++it) {
    const MatR r = reflect_g(q);
    const MatR fs = agent_apply(agents, r);
    const MatR q_next = opts.rho * (2.0 * fs - r) + (1.0 - opts.rho) * q;
    const double dq = (q_next - q).norm();
    q = q_next;
    out.mann_iters_total = ++out.iters;
    out.history.push_back(
        make_row(agents, reflect_g(q), 0, out.iters, dq, opts));
    if (dq < eps) {
      out.converged = true;
      break;
    }
  }
  out.s_star = reflect_g(q);
  out.consensus = out.s_star.rowwise().mean();
  return out;
}

namespace {
/// Rebuilds every agent at the new estimate; on failure retries once with
/// the halfway point between the previous and new estimates.
void rebuild_agents(std::vector<ProxAgent>& agents,
                    const SystemBuilder& builder, const MatR& s_cols,
                    const VecR& s_prev, SensingUpdateSource source) {
  const VecR mean = s_cols.rowwise().mean().cwiseMax(0.0);
  for (size_t l = 0; l < agents.size(); ++l) {
    const VecR target = source == SensingUpdateSource::kConsensusMean
                            ? mean
                            : VecR(s_cols.col(l).cwiseMax(0.0));
    try {
      agents[l].reset_system(builder(static_cast<int>(l), target));
    } catch (const std::exception&) {
      const VecR damped = 0.5 * (s_prev + target);
      agents[l].reset_system(builder(static_cast<int>(l), damped));
    }
  }
}
}  // namespace

BimResult bim_outer(std::vector<ProxAgent>& agents,
                    const SystemBuilder& builder, const BimOptions& opts) {
  const int n_agents = static_cast<int>(agents.size());
  if (n_agents == 0) throw std::invalid_argument("bim_outer: no agents");
  if (opts.lambda_fraction >= 0.0)
    for (auto& agent : agents)
      agent.set_lambda(default_lambda(agent.system(), opts.lambda_fraction));

  const long two_m = agents[0].system().beta.size();
  BimResult out;

  // Born initial stack: every column is the single-BS MAP reconstruction
  // from BS 1.
  const VecR s_init = agents[0].map_estimate().s;
  MatR s_stack = s_init.replicate(1, n_agents);
  VecR s_prev = s_init;

  if (opts.mode == SensingUpdateMode::kPerMannIteration && opts.refine) {
    // Interleaved loop: Q update, S = (2G - I) Q, sensing refresh, agent
    // refresh, in that order.
    if (!(opts.mann.rho > 0.0 && opts.mann.rho < 1.0))
      throw std::invalid_argument("bim_outer: rho must lie in (0, 1)");
    const double eps = opts.mann.eps > 0.0
                           ? opts.mann.eps
                           : 1e-6 * std::sqrt(double(two_m) * n_agents);
    MatR q = reflect_g(s_stack);
    for (int it = 0; it < opts.mann.max_outer; ++it) {
      const MatR r = reflect_g(q);
      const MatR fs = agent_apply(agents, r);
      const MatR q_next = opts.mann.rho * (2.0 * fs - r) +
                          (1.0 - opts.mann.rho) * q;
      const double dq = (q_next - q).norm();
      q = q_next;
      s_stack = reflect_g(q);
      ++out.mann_iters_total;
      out.history.push_back(make_row(agents, s_stack, it + 1,
                                     static_cast<int>(out.mann_iters_total),
                                     dq, opts.mann));
      if (dq < eps) {
        out.converged = true;
        break;
      }
      rebuild_agents(agents, builder, s_stack, s_prev, opts.source);
      s_prev = s_stack.rowwise().mean().cwiseMax(0.0);
    }
    out.bim_iters = static_cast<int>(out.mann_iters_total);
    out.consensus = s_stack.rowwise().mean().cwiseMax(0.0);
  } else {
    const int outer_count = opts.refine ? opts.n_bim : 1;
    for (int outer = 0; outer < outer_count; ++outer) {
      MannResult mr = mann_solve(agents, s_stack, opts.mann);
      out.mann_iters_total += mr.mann_iters_total;
      for (auto& row : mr.history) {
        row.outer_iter = outer + 1;
        out.history.push_back(row);
      }
      s_stack = mr.s_star;
      const VecR consensus = mr.consensus.cwiseMax(0.0);
      out.bim_iters = outer + 1;
      out.consensus = consensus;
      const double rel_change =
          (consensus - s_prev).norm() / std::max(consensus.norm(), 1e-300);
      if (outer > 0 && rel_change < opts.eps_bim) {
        out.converged = true;
        break;
      }
      if (opts.refine && outer + 1 < outer_count)
        rebuild_agents(agents, builder, s_stack, s_prev, opts.source);
      s_prev = consensus;
      out.converged = mr.converged;
    }
  }

  out.overhead_reals = two_m * out.mann_iters_total;
  if (!opts.log_csv_path.empty())
    write_history_csv(opts.log_csv_path, out.history);
  return out;
}

void write_history_csv(const std::string& path,
                       const std::vector<MannHistoryRow>& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
  f << "outer_iter,mann_iter,delta_q_fro";
  const size_t n_bs = history.empty() ? 0 : history.front().data_fidelity.size();
  for (size_t l = 0; l < n_bs; ++l) f << ",data_fidelity_bs" << (l + 1);
  f << ",consensus_nmse_db\n";
  for (const auto& row : history) {
    f << row.outer_iter << ',' << row.mann_iter << ',' << row.delta_q;
    for (double v : row.data_fidelity) f << ',' << v;
    f << ',' << row.consensus_nmse_db << '\n';
  }
}

}  // namespace emprop
