#include "emprop/em_forward.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "emprop/hankel.hpp"
#include "emprop/sensing_model.hpp"

namespace emprop {

std::complex<double> greens_2d(double k, const Vec2& r, const Vec2& rp) {
  const double dist = (r - rp).norm();
  if (dist <= 0.0)
    throw std::invalid_argument("greens_2d: r == r', use the self-term path");
  return std::complex<double>(0.0, -0.25) * hankel2_0(k * dist);
}

namespace {
std::complex<double> self_term(double k, double cell_area) {
  const double a = std::sqrt(cell_area / M_PI);
  const std::complex<double> j(0.0, 1.0);
  return 0.5 * j * (M_PI * k * a * hankel2_1(k * a) - 2.0 * j);
}

MatC discretize_greens_impl(const GridRegion& grid, double k, bool parallel) {
  const int m_count = grid.size();
  MatC g(m_count, m_count);
  const double scale = k * k * grid.cell_area;
  const std::complex<double> diag = self_term(k, grid.cell_area);
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (int m = 0; m < m_count; ++m) {
    g(m, m) = diag;
    for (int mp = 0; mp < m; ++mp) {
      const std::complex<double> v =
          scale * greens_2d(k, grid.points[m], grid.points[mp]);
      g(m, mp) = v;
      g(mp, m) = v;
    }
  }
  return g;
}
}  // namespace

MatC discretize_greens(const GridRegion& grid, double k) {
  return discretize_greens_impl(grid, k, true);
}

MatC discretize_greens_serial(const GridRegion& grid, double k) {
  return discretize_greens_impl(grid, k, false);
}

TotalFieldSolver::TotalFieldSolver(const MatC& greens, const VecC& chi) {
  MatC sys = -greens * chi.asDiagonal().toDenseMatrix();
  sys.diagonal().array() += 1.0;
  lu.compute(sys);
  rcond = lu.rcond();
  if (!(rcond > 1e-12))
    throw std::runtime_error(
        "total_field: (I - G diag chi) is singular or ill-conditioned "
        "(non-physical contrast)");
}

VecC total_field(const MatC& greens, const VecC& chi, const VecC& incident) {
  MatC sys = -greens * chi.asDiagonal().toDenseMatrix();
  sys.diagonal().array() += 1.0;
  Eigen::PartialPivLU<MatC> lu(sys);
  if (!(lu.rcond() > 1e-12))
    throw std::runtime_error("total_field: ill-conditioned system");
  VecC e_t = lu.solve(incident);
  // One refinement step keeps the residual at the contract level.
  const VecC res = incident - sys * e_t;
  if (res.norm() > 1e-10 * incident.norm()) e_t += lu.solve(res);
  return e_t;
}

VecC contrast_source(const VecC& chi, const VecC& total) {
  return chi.cwiseProduct(total);
}

MatC radiation_ue(const GridRegion& grid, const UEConfig& ue, double k) {
  const auto ants = ue.antenna_positions();
  for (const Vec2& a : ants)
    if (grid.contains(a))
      throw std::invalid_argument("radiation_ue: UE antenna inside region D");
  const int m_count = grid.size();
  MatC h1(m_count, static_cast<int>(ants.size()));
#pragma omp parallel for schedule(static)
  for (int m = 0; m < m_count; ++m)
    for (size_t n = 0; n < ants.size(); ++n)
      h1(m, static_cast<int>(n)) = greens_2d(k, grid.points[m], ants[n]);
  return h1;
}

MatC radiation_bs(const GridRegion& grid, const BSConfig& bs, double k) {
  const auto ants = bs.antenna_positions();
  for (const Vec2& a : ants)
    if (grid.contains(a))
      throw std::invalid_argument("radiation_bs: BS antenna inside region D");
  const int m_count = grid.size();
  const double scale = k * k * grid.cell_area;
  MatC h2(static_cast<int>(ants.size()), m_count);
#pragma omp parallel for schedule(static)
  for (int m = 0; m < m_count; ++m)
    for (size_t r = 0; r < ants.size(); ++r)
      h2(static_cast<int>(r), m) = scale * greens_2d(k, ants[r], grid.points[m]);
  return h2;
}

MatC forward_channel(const MatC& h2, const VecC& chi, const MatC& greens,
                     const MatC& h1) {
  TotalFieldSolver tf(greens, chi);
  const MatC e_t = tf.solve(h1);
  return h2 * chi.asDiagonal() * e_t;
}

ForwardModel ForwardModel::build(const Scenario& sc) {
  ForwardModel fm;
  fm.scenario = &sc;
  const int K = sc.subcarriers.K;
  const int U = static_cast<int>(sc.ues.size());
  const int L = static_cast<int>(sc.bss.size());
  fm.h1.resize(K);
  fm.h2.resize(K);
  fm.p.resize(K);
  fm.ph2.resize(K);
  for (int ks = 0; ks < K; ++ks) {
    const double k_wave = sc.subcarriers.wavenumber(ks + 1);
    const double lambda = sc.subcarriers.wavelength(ks + 1);
    fm.h1[ks].reserve(U);
    for (int u = 0; u < U; ++u)
      fm.h1[ks].push_back(radiation_ue(sc.region, sc.ues[u], k_wave));
    fm.h2[ks].reserve(L);
    fm.p[ks].reserve(L);
    fm.ph2[ks].reserve(L);
    for (int l = 0; l < L; ++l) {
      fm.h2[ks].push_back(radiation_bs(sc.region, sc.bss[l], k_wave));
      fm.p[ks].push_back(receiver_beamformer(sc.bss[l], sc.region, lambda));
      fm.ph2[ks].push_back(fm.p[ks][l] * fm.h2[ks][l]);
    }
  }
  return fm;
}

void ForwardModel::set_pilots(const std::vector<std::vector<MatC>>& pilots) {
  const int K = n_k();
  const int U = n_ue();
  if (static_cast<int>(pilots.size()) != K)
    throw std::invalid_argument("set_pilots: need one pilot set per subcarrier");
  hbar1.assign(K, MatC());
  const int I = static_cast<int>(pilots[0][0].cols());
  for (int ks = 0; ks < K; ++ks) {
    MatC hb(grid_size(), U * I);
    for (int u = 0; u < U; ++u)
      hb.middleCols(u * I, I) = h1[ks][u] * pilots[ks][u];
    hbar1[ks] = std::move(hb);
  }
}

MatC ForwardModel::greens(int k_slot) const {
  return discretize_greens(scenario->region,
                           scenario->subcarriers.wavenumber(k_slot + 1));
}

Measurements synthesize_measurements(const ForwardModel& fm,
                                     const Eigen::VectorXd& s_true,
                                     const std::vector<std::vector<MatC>>& pilots,
                                     double snr_db, std::uint64_t seed) {
  const Scenario& sc = *fm.scenario;
  const int K = fm.n_k();
  const int U = fm.n_ue();
  const int L = fm.n_bs();
  const int I = static_cast<int>(pilots.at(0).at(0).cols());
  const double omega_c = sc.subcarriers.omega_c();

  for (int ks = 0; ks < K; ++ks)
    for (int u = 0; u < U; ++u)
      if (pilots[ks][u].squaredNorm() >
          sc.ues[u].power_budget * (1.0 + 1e-9))
        throw std::invalid_argument(
            "synthesize_measurements: pilot violates power budget");

  Measurements out;
  out.y.assign(K, std::vector<VecC>(L));
  for (int ks = 0; ks < K; ++ks) {
    const MatC g = fm.greens(ks);
    const VecC chi = chi_from_s(s_true, sc.subcarriers.omega(ks + 1), omega_c);
    TotalFieldSolver tf(g, chi);
    // Contrast sources for all UE pilot columns at once: M x (U*I).
    MatC j_src(fm.grid_size(), U * I);
    for (int u = 0; u < U; ++u) {
      const MatC e_inc = fm.h1[ks][u] * pilots[ks][u];
      const MatC e_tot = tf.solve(e_inc);
      j_src.middleCols(u * I, I) = chi.asDiagonal() * e_tot;
    }
    for (int l = 0; l < L; ++l) {
      const MatC y_mat = fm.ph2[ks][l] * j_src;  // N_r x (U*I)
      out.y[ks][l] = Eigen::Map<const VecC>(y_mat.data(), y_mat.size());
      out.signal_power += y_mat.squaredNorm();
    }
  }

  if (std::isinf(snr_db)) return out;

  double beam_gain = 0.0;  // sum over (k,l) of U*I*||P||_F^2
  for (int ks = 0; ks < K; ++ks)
    for (int l = 0; l < L; ++l)
      beam_gain += U * I * fm.p[ks][l].squaredNorm();
  const double snr_lin = std::pow(10.0, snr_db / 10.0);
  out.noise_sigma2 = out.signal_power / (snr_lin * beam_gain);
  const double comp_std = std::sqrt(out.noise_sigma2 / 2.0);

  const int n_r = static_cast<int>(fm.p[0][0].rows());
  for (int ks = 0; ks < K; ++ks) {
    for (int l = 0; l < L; ++l) {
      std::seed_seq sseq{seed, static_cast<std::uint64_t>(ks),
                         static_cast<std::uint64_t>(l)};
      std::mt19937_64 rng(sseq);
      std::normal_distribution<double> gauss(0.0, comp_std);
      MatC n_hat(n_r, U * I);
      for (int c = 0; c < U * I; ++c)
        for (int r = 0; r < n_r; ++r)
          n_hat(r, c) = std::complex<double>(gauss(rng), gauss(rng));
      const MatC n_tilde = fm.p[ks][l] * n_hat;
      out.y[ks][l] +=
          Eigen::Map<const VecC>(n_tilde.data(), n_tilde.size());
    }
  }
  return out;
}

}  // namespace emprop
