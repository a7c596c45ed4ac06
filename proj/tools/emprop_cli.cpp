#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "emprop/harness.hpp"

namespace {

int run_points(emprop::ExperimentConfig cfg) {
  const auto reports = emprop::run_experiment(cfg);
  std::cout << emprop::report_table(reports);
  for (const auto& r : reports)
    if (!r.ok) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EM property sensing toolkit"};
  app.require_subcommand(1);

  std::string config_path, scenario_path, out_path, csv_path, materials_path;
  std::vector<double> snr, cherr;
  std::vector<int> klist, llist;
  std::uint64_t seed = 0;
  bool have_seed = false, no_classify = false, images = false;
  double gamma = 1.0;
  int restarts = 3;
  int min_pts = 4;
  double eps = -1.0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", out_path, "override output directory");
    cmd->add_option("--seed", seed, "override seed")
        ->each([&](const std::string&) { have_seed = true; });
    cmd->add_flag("--no-classify", no_classify,
                  "skip material classification");
    cmd->add_flag("--images", images, "export reconstruction images");
  };

  CLI::App* run = app.add_subcommand("run", "run the config as written");
  add_common(run);

  CLI::App* sweep =
      app.add_subcommand("sweep", "run the config with axis overrides");
  add_common(sweep);
  sweep->add_option("--snr", snr, "SNR axis (dB)");
  sweep->add_option("--k", klist, "subcarrier-count axis");
  sweep->add_option("--l", llist, "BS-count axis");
  sweep->add_option("--channel-error", cherr, "channel error axis (dB)");

  CLI::App* design =
      app.add_subcommand("design-pilots", "design and export pilots");
  design->add_option("scenario", scenario_path, "scenario file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  design->add_option("--out", out_path, "pilot output file")->required();
  design->add_option("--gamma", gamma, "cross-subcarrier weight");
  design->add_option("--restarts", restarts, "PGD restarts");
  design->add_option("--seed", seed, "design seed");

  CLI::App* cls = app.add_subcommand(
      "classify", "cluster + label a reconstruction CSV");
  cls->add_option("csv", csv_path, "reconstruction _s.csv")
      ->required()
      ->check(CLI::ExistingFile);
  cls->add_option("--scenario", scenario_path,
                  "scenario supplying f_c and the material db")
      ->required()
      ->check(CLI::ExistingFile);
  cls->add_option("--min-pts", min_pts, "DBSCAN min_pts");
  cls->add_option("--eps", eps, "DBSCAN eps (<0: knee rule)");

  CLI::App* report =
      app.add_subcommand("report", "summarize a report CSV");
  report->add_option("csv", csv_path, "report.csv path")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || sweep->parsed()) {
      emprop::ExperimentConfig cfg =
          emprop::ExperimentConfig::load(config_path);
      if (!out_path.empty()) cfg.output_dir = out_path;
      if (have_seed) cfg.seed = seed;
      if (no_classify) cfg.classify = false;
      if (images) cfg.export_images = true;
      if (sweep->parsed()) {
        if (!snr.empty()) cfg.snr_db = snr;
        if (!klist.empty()) cfg.k_list = klist;
        if (!llist.empty()) cfg.l_list = llist;
        if (!cherr.empty()) cfg.channel_error_db = cherr;
      }
      return run_points(std::move(cfg));
    }
    if (design->parsed()) {
      emprop::Scenario sc = emprop::load_scenario(scenario_path);
      emprop::ForwardModel fm = emprop::ForwardModel::build(sc);
      std::vector<std::vector<emprop::PilotMatrix>> per_ue;
      for (int u = 0; u < fm.n_ue(); ++u) {
        std::vector<emprop::MatC> h1_per_k(fm.n_k());
        for (int k = 0; k < fm.n_k(); ++k) h1_per_k[k] = fm.h1[k][u];
        emprop::PilotParams prm;
        prm.gamma = gamma;
        prm.restarts = restarts;
        prm.power = sc.ues[u].power_budget;
        prm.p_bar = sc.ues[u].min_region_power;
        prm.seed = (seed ? seed : sc.seed) + u;
        per_ue.push_back(design_all(h1_per_k, sc.pilot_symbols, prm));
      }
      emprop::save_pilots(out_path, per_ue);
      std::cout << "wrote " << out_path << " (" << per_ue.size() << " UEs, "
                << fm.n_k() << " subcarriers)\n";
      return 0;
    }
    if (cls->parsed()) {
      emprop::MaterialDb db;
      const emprop::Scenario sc = emprop::load_scenario(scenario_path, db);
      const emprop::VecR s = emprop::load_property_csv(csv_path);
      const auto res = emprop::identify(s, db, sc.subcarriers.omega_c(),
                                        min_pts, eps);
      std::cout << res.clusters.n_clusters << " clusters (eps=" << res.eps
                << ")\n";
      for (int c = 0; c < res.clusters.n_clusters; ++c) {
        std::cout << "  cluster " << c << ": " << res.clusters.counts[c]
                  << " px, centroid (" << res.clusters.centroids[c][0] << ", "
                  << res.clusters.centroids[c][1] << ") -> "
                  << db.materials[res.assignment.cluster_material[c]].name
                  << (c == res.assignment.air_cluster ? " [air]" : "")
                  << "\n";
      }
      return 0;
    }
    if (report->parsed()) {
      std::cout << emprop::report_table(emprop::read_reports_csv(csv_path));
      return 0;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
