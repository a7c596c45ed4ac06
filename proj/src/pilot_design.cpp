#include "emprop/pilot_design.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <random>
#include <stdexcept>

namespace emprop {

double pilot_objective(const MatC& w, double xi, const MatC& h1,
                       const MatC& a, double gamma) {
  const MatC hw = h1 * w;
  MatC gram = hw.adjoint() * hw;
  gram.diagonal().array() -= xi;
  double p = gram.squaredNorm();
  if (a.cols() > 0 && gamma != 0.0) p += gamma * (a.adjoint() * hw).squaredNorm();
  return p;
}

MatC wirtinger_grad(const MatC& w, double xi, const MatC& h1, const MatC& a,
                    double gamma) {
  const MatC hw = h1 * w;
  MatC gram = hw.adjoint() * hw;
  gram.diagonal().array() -= xi;
  MatC g = 2.0 * (h1.adjoint() * (hw * gram));
  if (a.cols() > 0 && gamma != 0.0)
    g += gamma * (h1.adjoint() * (a * (a.adjoint() * hw)));
  return g;
}

namespace {

void project_power(MatC& w, double power) {
  const double n2 = w.squaredNorm();
  if (n2 > power) w *= std::sqrt(power / n2);
}

double xi_update(const MatC& h1w, double p_bar, int n_symbols) {
  // Unconstrained minimizer of the first term over xi is
  // ||H1 W||_F^2 / I; the floor keeps I * xi >= p_bar.
  return std::max(p_bar, h1w.squaredNorm()) / n_symbols;
}

struct RunOut {
  MatC w;
  double xi = 0.0;
  double objective = 0.0;
  bool infeasible = false;
  int iters = 0;
  std::vector<double> objective_history;
};

RunOut pgd_run(const MatC& h1, const MatC& a, const PilotParams& prm,
               MatC w) {
  project_power(w, prm.power);
  const int n_symbols = static_cast<int>(w.cols());
  double xi = xi_update(h1 * w, prm.p_bar, n_symbols);
  double obj = pilot_objective(w, xi, h1, a, prm.gamma);

  RunOut out;
  out.objective_history.push_back(obj);
  for (int it = 0; it < prm.max_iters; ++it) {
    const MatC grad = wirtinger_grad(w, xi, h1, a, prm.gamma);
    const double g2 = grad.squaredNorm();
    if (g2 == 0.0) {
      out.iters = it;
      break;
    }
    // Armijo on the projected step: accept when the sufficient-decrease
    // condition holds at the candidate after projection.
    double step = prm.init_step;
    MatC w_next = w;
    double obj_next = obj;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      MatC cand = w - step * grad;
      project_power(cand, prm.power);
      const double cand_obj = pilot_objective(cand, xi, h1, a, prm.gamma);
      if (cand_obj <= obj - prm.armijo_c * step * g2) {
        w_next = std::move(cand);
        obj_next = cand_obj;
        accepted = true;
        break;
      }
      step *= prm.armijo_beta;
    }
    out.iters = it + 1;
    if (!accepted) break;
    w = std::move(w_next);

    const double xi_free = (h1 * w).squaredNorm() / n_symbols;
    const double xi_floor = prm.p_bar / n_symbols;
    xi = std::max(xi_floor, xi_free);
    const double prev = obj_next;
    obj = pilot_objective(w, xi, h1, a, prm.gamma);
    out.objective_history.push_back(obj);
    if (std::abs(prev - obj) <= prm.tol * std::max(1.0, std::abs(prev)) &&
        it > 0)
      break;
  }
  out.w = std::move(w);
  out.xi = xi;
  out.objective = obj;
  // Infeasibility: at the final design the power floor is still binding,
  // i.e. the region power achievable under the budget stays below p_bar.
  out.infeasible =
      (h1 * out.w).squaredNorm() < prm.p_bar * (1.0 - 1e-9);
  return out;
}

MatC random_init(int n_t, int n_symbols, double power,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  MatC w(n_t, n_symbols);
  for (int j = 0; j < n_symbols; ++j)
    for (int i = 0; i < n_t; ++i)
      w(i, j) = std::complex<double>(dist(rng), dist(rng));
  // Full power is never suboptimal for coherence shaping.
  w *= std::sqrt(power) / w.norm();
  return w;
}

}  // namespace

PilotMatrix pgd_design(const MatC& h1, const MatC& a, int n_symbols,
                       const PilotParams& prm) {
  if (prm.power <= 0.0 || prm.p_bar < 0.0 || prm.restarts < 1 ||
      n_symbols < 1)
    throw std::invalid_argument("pgd_design: invalid parameters");
  const int n_t = static_cast<int>(h1.cols());

  std::mt19937_64 rng(prm.seed);
  PilotMatrix best;
  bool have_best = false;
  for (int r = 0; r < prm.restarts; ++r) {
    RunOut run = pgd_run(h1, a, prm, random_init(n_t, n_symbols, prm.power, rng));
    if (!have_best || run.objective < best.objective) {
      best.w = std::move(run.w);
      best.xi = run.xi;
      best.objective = run.objective;
      best.infeasible = run.infeasible;
      best.iters = run.iters;
      best.objective_history = std::move(run.objective_history);
      have_best = true;
    }
  }
  return best;
}

std::vector<PilotMatrix> design_all(const std::vector<MatC>& h1_per_k,
                                    int n_symbols,
                                    const PilotParams& params) {
  const int n_k = static_cast<int>(h1_per_k.size());
  if (n_k == 0) return {};
  const long region_rows = h1_per_k[0].rows();
  std::vector<PilotMatrix> out;
  out.reserve(n_k);
  MatC accum(region_rows, 0);  // A_k: prior-subcarrier patterns H1_j W_j
  PilotParams prm = params;
  for (int k = 0; k < n_k; ++k) {
    prm.seed = params.seed + static_cast<std::uint64_t>(k) * 0x9e3779b97f4a7c15ULL;
    out.push_back(pgd_design(h1_per_k[k], accum, n_symbols, prm));
    MatC grown(region_rows, accum.cols() + n_symbols);
    grown.leftCols(accum.cols()) = accum;
    grown.rightCols(n_symbols) = h1_per_k[k] * out.back().w;
    accum = std::move(grown);
  }
  return out;
}

double max_coherence(const MatC& h1, const MatC& w) {
  const MatC hw = h1 * w;
  const int n = static_cast<int>(hw.cols());
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double denom = hw.col(i).norm() * hw.col(j).norm();
      if (denom > 0.0)
        worst = std::max(worst,
                         std::abs(hw.col(i).dot(hw.col(j))) / denom);
    }
  return worst;
}

void save_pilots(const std::string& path,
                 const std::vector<std::vector<PilotMatrix>>& pilots) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_pilots: cannot open " + path);
  const size_t n_ue = pilots.size();
  const size_t n_k = n_ue ? pilots[0].size() : 0;
  const long n_t = n_k ? pilots[0][0].w.rows() : 0;
  const long n_i = n_k ? pilots[0][0].w.cols() : 0;
  f.precision(17);
  f << n_ue << ' ' << n_k << ' ' << n_t << ' ' << n_i << '\n';
  for (const auto& per_ue : pilots)
    for (const auto& pm : per_ue)
      for (long r = 0; r < pm.w.rows(); ++r)
        for (long c = 0; c < pm.w.cols(); ++c)
          f << pm.w(r, c).real() << ' ' << pm.w(r, c).imag() << '\n';
}

std::vector<std::vector<MatC>> load_pilots(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_pilots: cannot open " + path);
  size_t n_ue, n_k;
  long n_t, n_i;
  if (!(f >> n_ue >> n_k >> n_t >> n_i))
    throw std::runtime_error("load_pilots: bad header in " + path);
  std::vector<std::vector<MatC>> out(n_ue, std::vector<MatC>(n_k));
  for (size_t u = 0; u < n_ue; ++u)
    for (size_t k = 0; k < n_k; ++k) {
      MatC w(n_t, n_i);
      for (long r = 0; r < n_t; ++r)
        for (long c = 0; c < n_i; ++c) {
          double re, im;
          if (!(f >> re >> im))
            throw std::runtime_error("load_pilots: truncated " + path);
          w(r, c) = {re, im};
        }
      out[u][k] = std::move(w);
    }
  return out;
}

}  // namespace emprop
