// Small hand-assembled scenarios shared by the test suites.
#pragma once

#include <random>

#include "emprop/em_forward.hpp"
#include "emprop/scene.hpp"

namespace support {

/// 8x8 grid (M=64), one UE (N_t=2), one BS (N_r=4), K subcarriers at 300 MHz.
/// A few plasterboard-like pixels form the target.
inline emprop::Scenario tiny_scenario(int n_k = 2) {
  emprop::Scenario sc;
  sc.region = emprop::GridRegion::make({0.0, 0.0}, 0.12, 8);
  sc.subcarriers = {3e8, 1e6, n_k};
  sc.pilot_symbols = 3;
  sc.seed = 5;
  sc.target.material_db = {{"board", 2.94, 0.012}};
  sc.target.labels.assign(64, 0);
  for (int m = 18; m < 22; ++m) sc.target.labels[m] = 1;
  for (int m = 34; m < 38; ++m) sc.target.labels[m] = 1;
  emprop::UEConfig ue;
  ue.n_t = 2;
  ue.antenna_spacing = 0.5;
  ue.power_budget = 1.0;
  ue.position = {3.0, 0.4};
  ue.orientation = emprop::boresight_toward(ue.position, sc.region);
  sc.ues = {ue};
  emprop::BSConfig bs;
  bs.n_r = 4;
  bs.antenna_spacing = 0.5;
  bs.position = {-8.0, 0.0};
  bs.orientation = emprop::boresight_toward(bs.position, sc.region);
  sc.bss = {bs};
  return sc;
}

/// Unit-power random pilots for every (k, u).
inline std::vector<std::vector<emprop::MatC>> random_pilots(
    const emprop::Scenario& sc, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<emprop::MatC>> pilots(
      sc.subcarriers.K, std::vector<emprop::MatC>(sc.ues.size()));
  for (int k = 0; k < sc.subcarriers.K; ++k)
    for (size_t u = 0; u < sc.ues.size(); ++u) {
      emprop::MatC w(sc.ues[u].n_t, sc.pilot_symbols);
      for (int j = 0; j < w.cols(); ++j)
        for (int i = 0; i < w.rows(); ++i)
          w(i, j) = std::complex<double>(d(rng), d(rng));
      w *= std::sqrt(sc.ues[u].power_budget) / w.norm();
      pilots[k][u] = w;
    }
  return pilots;
}

}  // namespace support
