// Compares the OpenMP kernels against their serial reference
// implementations: Green's-matrix assembly and normal-equation
// accumulation. Also checks that both paths agree bitwise / to rounding.
#include <chrono>
#include <cstdio>
#include <random>

#include "emprop/em_forward.hpp"
#include "emprop/sensing_model.hpp"

using namespace emprop;

namespace {

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(
        best, std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  int n_side = argc > 1 ? std::atoi(argv[1]) : 32;
  const GridRegion grid = GridRegion::make({0.0, 0.0}, 1.0, n_side);
  const double k = 2.0 * M_PI / 1.0;  // lambda = 1 m

  std::printf("grid %dx%d (M=%d)\n", n_side, n_side, grid.size());

  MatC g_par, g_ser;
  const double t_gp =
      time_best_of(3, [&] { g_par = discretize_greens(grid, k); });
  const double t_gs =
      time_best_of(3, [&] { g_ser = discretize_greens_serial(grid, k); });
  std::printf("discretize_greens   parallel %8.4f s  serial %8.4f s  "
              "speedup %.2fx  maxdiff %.3e\n",
              t_gp, t_gs, t_gs / t_gp,
              (g_par - g_ser).cwiseAbs().maxCoeff());

  const int m_count = grid.size();
  const int rows = 256;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 1.0);
  MatC d(rows, m_count);
  VecC y(rows);
  for (int c = 0; c < m_count; ++c)
    for (int r = 0; r < rows; ++r)
      d(r, c) = std::complex<double>(dist(rng), dist(rng));
  for (int r = 0; r < rows; ++r)
    y[r] = std::complex<double>(dist(rng), dist(rng));

  NormalEquations ne_par = NormalEquations::zero(2 * m_count);
  NormalEquations ne_ser = NormalEquations::zero(2 * m_count);
  const double t_ap = time_best_of(3, [&] {
    ne_par = NormalEquations::zero(2 * m_count);
    ne_par.accumulate(d, 0.9, y);
  });
  const double t_as = time_best_of(3, [&] {
    ne_ser = NormalEquations::zero(2 * m_count);
    ne_ser.accumulate_serial(d, 0.9, y);
  });
  std::printf("gram accumulate     parallel %8.4f s  serial %8.4f s  "
              "speedup %.2fx  maxdiff %.3e\n",
              t_ap, t_as, t_as / t_ap,
              (ne_par.gram - ne_ser.gram).cwiseAbs().maxCoeff());
  return 0;
}
