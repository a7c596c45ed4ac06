#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emprop/em_forward.hpp"
#include "emprop/mace.hpp"
#include "emprop/material_id.hpp"
#include "emprop/metrics.hpp"
#include "emprop/pilot_design.hpp"
#include "emprop/scene.hpp"

namespace emprop {

struct SolverConfig {
  double rho = 0.5;
  double eta = 1.0;
  double sigma2 = 1.0;
  double admm_tol = 1e-8;
  int admm_max_iters = 2000;
  double lambda_fraction = 0.05;
  double mann_eps = -1.0;  // < 0: 1e-6 sqrt(2 M L)
  int mann_max_outer = 500;
  bool refine = false;  // true: refresh sensing matrices past the Born step
  int n_bim = 5;
  double eps_bim = 1e-4;
  SensingUpdateMode update_mode = SensingUpdateMode::kPerMannIteration;
  SensingUpdateSource update_source = SensingUpdateSource::kConsensusMean;
};

struct PilotConfig {
  bool design = true;  // false: random full-power pilots
  PilotParams params;
};

struct MaterialConfig {
  int min_pts = 4;
  double eps = -1.0;  // < 0: knee of the sorted 4-NN curve
};

struct ExperimentConfig {
  Scenario scenario;
  std::string scenario_path;
  std::string output_dir = "out";
  std::vector<double> snr_db{30.0};
  std::vector<int> k_list;              // empty: scenario K only
  std::vector<int> l_list;              // empty: all BSs
  std::vector<double> channel_error_db; // empty: exact channels
  SolverConfig solver;
  PilotConfig pilot;
  MaterialConfig material;
  bool export_images = false;
  bool classify = true;
  std::uint64_t seed = 1;

  /// JSON config referencing a scenario file (itself JSON); relative paths
  /// resolve against the config file's directory.
  static ExperimentConfig load(const std::string& path);
};

/// Scenario file loader, shared by configs and the CLI. The overload with
/// a MaterialDb out-parameter also returns the scenario's full material
/// database (the TargetMap only keeps the phantom's subset).
Scenario load_scenario(const std::string& path);
Scenario load_scenario(const std::string& path, MaterialDb& db_out);

struct RunReport {
  double snr_db = 0.0;
  int n_k = 0;
  int n_bs = 0;
  double channel_error_db = 0.0;  // -inf when no error injected
  double nmse_db = 0.0;
  double accuracy_target = -1.0;  // -1 when classification skipped
  double accuracy_all = -1.0;
  int n_target_pixels = 0;
  int n_all_pixels = 0;
  int bim_iters = 0;
  long mann_iters = 0;
  long overhead_reals = 0;
  double wall_seconds = 0.0;
  std::string config_hash;
  bool ok = false;
  std::string error;

  /// Everything except wall_seconds, in CSV column order.
  std::string deterministic_fields() const;
};

/// Full sweep: cartesian product of (K, channel error, L, SNR), one report
/// per point. A failing point is logged in its report and the sweep
/// continues. Artifacts land under cfg.output_dir.
std::vector<RunReport> run_experiment(const ExperimentConfig& cfg);

/// H plus CSCG perturbation scaled so that
/// 10 log10(||dH||_F^2 / ||H||_F^2) hits target_nmse_db exactly;
/// target -inf returns H unchanged.
MatC inject_channel_error(const MatC& h, double target_nmse_db,
                          std::uint64_t seed);

/// Writes <prefix>_eps.pgm and <prefix>_sigma.pgm (P2 graymaps, pixel
/// (row, col) = grid index row * n_side + col) plus <prefix>_s.csv: 2 n_side
/// rows of n_side values, the eps_r - 1 grid first and the sigma_scaled
/// grid below it, full precision.
void export_images(const VecR& s_est, const GridRegion& grid,
                   const std::string& prefix);

/// Inverse of the CSV part of export_images; bitwise round trip.
VecR load_property_csv(const std::string& path);

std::uint64_t fnv1a(const std::string& bytes);

void append_reports_csv(const std::string& path,
                        const std::vector<RunReport>& reports);
std::vector<RunReport> read_reports_csv(const std::string& path);

/// Plain-text summary table of a report CSV, grouped by sweep axes.
std::string report_table(const std::vector<RunReport>& reports);

}  // namespace emprop
