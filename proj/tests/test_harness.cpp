#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "emprop/harness.hpp"

using namespace emprop;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "emprop_harness_test";

struct TmpDir {
  TmpDir() {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
  ~TmpDir() { fs::remove_all(kTmp); }
};

/// 8x8 scenario with a 2x2 wood block, one BS and one UE; fast to run.
std::string write_tiny_scenario() {
  const fs::path phantom = kTmp / "phantom8.txt";
  {
    std::ofstream f(phantom);
    f << 8 << "\n";
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c)
        f << ((r >= 3 && r <= 4 && c >= 3 && c <= 4) ? 1 : 0) << ' ';
      f << "\n";
    }
  }
  const fs::path scen = kTmp / "tiny.json";
  std::ofstream f(scen);
  f << R"({
    "region": {"center": [0, 0], "half_extent": 0.12, "n_side": 8},
    "materials_file": ")" << EMPROP_SOURCE_DIR << R"(/assets/materials.txt",
    "phantom_file": ")" << phantom.string() << R"(",
    "phantom_materials": ["wood"],
    "subcarriers": {"f_c_hz": 2.5e9, "delta_f_hz": 5e7, "count": 2},
    "pilot_symbols": 2,
    "seed": 7,
    "bs_list": [
      {"position": [0.8, 0.0], "n_r": 4},
      {"position": [-0.8, 0.0], "n_r": 4}
    ],
    "ue_list": [{"position": [0.0, 0.7], "n_t": 2}]
  })";
  return scen.string();
}

}  // namespace

TEST_CASE("nmse_db") {
  SUBCASE("single-pixel hand example") {
    Eigen::VectorXd s_true(2), s_est(2);
    s_true << 3.0, 4.0;  // eps_r = 4, sigma_scaled = 4
    s_est << 0.0, 0.0;
    // num = 25, den = (3+1)^2 + 16 = 32
    CHECK(nmse_db(s_true, s_est) ==
          doctest::Approx(10.0 * std::log10(25.0 / 32.0)));
  }
  SUBCASE("air pixels contribute to the denominator") {
    Eigen::VectorXd s_true = Eigen::VectorXd::Zero(4), s_est(4);
    s_true[0] = 1.0;  // one target pixel, one air pixel
    s_est << 0.0, 0.0, 0.0, 0.0;
    // num = 1, den = (1+1)^2 + 1 + 0 + 0 = 5
    CHECK(nmse_db(s_true, s_est) == doctest::Approx(10.0 * std::log10(0.2)));
  }
  SUBCASE("perfect reconstruction floors at -300") {
    Eigen::VectorXd s(4);
    s << 1.0, 0.5, 0.2, 0.0;
    CHECK(nmse_db(s, s) == -300.0);
  }
  SUBCASE("invalid inputs throw") {
    CHECK_THROWS(nmse_db(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)));
    CHECK_THROWS(nmse_db(Eigen::VectorXd::Ones(4), Eigen::VectorXd::Ones(2)));
    CHECK_THROWS(nmse_db(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3)));
  }
}

TEST_CASE("fnv1a matches the reference test vectors") {
  CHECK(fnv1a("") == 14695981039346656037ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("inject_channel_error") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  MatC h(6, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 6; ++i) h(i, j) = std::complex<double>(g(rng), g(rng));

  SUBCASE("achieved error ratio is exact") {
    for (double db : {-40.0, -30.0, -20.0}) {
      const MatC hp = inject_channel_error(h, db, 11);
      const double got =
          10.0 * std::log10((hp - h).squaredNorm() / h.squaredNorm());
      CHECK(got == doctest::Approx(db).epsilon(1e-10));
    }
  }
  SUBCASE("deterministic per seed, sensitive to the seed") {
    const MatC a = inject_channel_error(h, -20.0, 5);
    const MatC b = inject_channel_error(h, -20.0, 5);
    const MatC c = inject_channel_error(h, -20.0, 6);
    CHECK((a - b).norm() == 0.0);
    CHECK((a - c).norm() > 0.0);
  }
  SUBCASE("-inf target returns the channel unchanged") {
    const MatC same =
        inject_channel_error(h, -std::numeric_limits<double>::infinity(), 5);
    CHECK((same - h).norm() == 0.0);
  }
}

TEST_CASE("export_images round trip") {
  TmpDir tmp;
  const GridRegion grid = GridRegion::make(Vec2(0.0, 0.0), 0.5, 4);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  VecR s(32);
  for (int i = 0; i < 32; ++i) s[i] = u(rng);
  const std::string prefix = (kTmp / "img").string();
  export_images(s, grid, prefix);

  SUBCASE("CSV restores the property vector bitwise") {
    const VecR back = load_property_csv(prefix + "_s.csv");
    REQUIRE(back.size() == s.size());
    CHECK((back - s).norm() == 0.0);
  }
  SUBCASE("PGM graymaps carry the grid dimensions") {
    for (const char* suffix : {"_eps.pgm", "_sigma.pgm"}) {
      std::ifstream f(prefix + suffix);
      REQUIRE(f.good());
      std::string magic;
      int w = 0, hgt = 0, maxval = 0;
      f >> magic >> w >> hgt >> maxval;
      CHECK(magic == "P2");
      CHECK(w == 4);
      CHECK(hgt == 4);
      CHECK(maxval > 0);
    }
  }
  SUBCASE("missing CSV throws") {
    CHECK_THROWS(load_property_csv((kTmp / "absent.csv").string()));
  }
}

TEST_CASE("report CSV round trip") {
  TmpDir tmp;
  std::vector<RunReport> reports(2);
  reports[0].snr_db = 30.0;
  reports[0].n_k = 16;
  reports[0].n_bs = 4;
  reports[0].channel_error_db = -std::numeric_limits<double>::infinity();
  reports[0].nmse_db = -5.25;
  reports[0].accuracy_target = 0.5;
  reports[0].accuracy_all = 0.75;
  reports[0].n_target_pixels = 168;
  reports[0].n_all_pixels = 1024;
  reports[0].bim_iters = 1;
  reports[0].mann_iters = 123;
  reports[0].overhead_reals = 246 * 1024;
  reports[0].wall_seconds = 12.5;
  reports[0].config_hash = "00ff00ff00ff00ff";
  reports[0].ok = true;
  reports[1].snr_db = 0.0;
  reports[1].channel_error_db = -20.0;
  reports[1].ok = false;
  reports[1].error = "synthetic failure";

  const std::string path = (kTmp / "reports.csv").string();
  append_reports_csv(path, reports);
  const auto loaded = read_reports_csv(path);
  REQUIRE(loaded.size() == 2);
  for (size_t i = 0; i < 2; ++i)
    CHECK(loaded[i].deterministic_fields() ==
          reports[i].deterministic_fields());
  // appending again grows the file without rewriting the header
  append_reports_csv(path, {reports[0]});
  CHECK(read_reports_csv(path).size() == 3);
  // wall time is excluded from the deterministic fields
  RunReport copy = reports[0];
  copy.wall_seconds = 99.0;
  CHECK(copy.deterministic_fields() == reports[0].deterministic_fields());
  // table rendering mentions the sweep axes
  const std::string table = report_table(loaded);
  CHECK(table.find("NMSE") != std::string::npos);
  CHECK(table.find("SNR") != std::string::npos);
}

TEST_CASE("load_scenario parses the bundled desk scene") {
  const std::string path =
      std::string(EMPROP_SOURCE_DIR) + "/assets/scenarios/desk.json";
  MaterialDb db;
  const Scenario sc = load_scenario(path, db);
  CHECK(sc.region.n_side == 32);
  CHECK(sc.region.size() == 1024);
  CHECK(sc.subcarriers.f_c > 0.0);
  CHECK(sc.subcarriers.K >= 1);
  CHECK(sc.bss.size() >= 4);
  CHECK(sc.ues.size() >= 1);
  CHECK(db.materials.size() >= 3);
  CHECK(db.air_index >= 0);
  // ground truth references a nonempty material subset
  CHECK_FALSE(sc.target.material_db.empty());
  int n_target = 0;
  for (int l : sc.target.labels) n_target += l > 0;
  CHECK(n_target > 0);
  CHECK_THROWS(load_scenario((kTmp / "missing.json").string()));
}

TEST_CASE("experiment config defaults and parsing") {
  TmpDir tmp;
  const std::string scen = write_tiny_scenario();
  const fs::path cfg_path = kTmp / "cfg.json";
  {
    std::ofstream f(cfg_path);
    f << R"({"scenario": ")" << scen << R"(",
         "output_dir": ")" << (kTmp / "out").string() << R"(",
         "snr_db": [10, 20], "l_list": [1, 2], "seed": 3,
         "solver": {"admm_max_iters": 123, "lambda_fraction": 0.2,
                    "update_mode": "per_mann_solve"},
         "pilots": {"design": false},
         "classify": false})";
  }
  const ExperimentConfig cfg = ExperimentConfig::load(cfg_path.string());
  CHECK(cfg.snr_db == std::vector<double>{10.0, 20.0});
  CHECK(cfg.l_list == std::vector<int>{1, 2});
  CHECK(cfg.seed == 3);
  CHECK(cfg.solver.admm_max_iters == 123);
  CHECK(cfg.solver.lambda_fraction == doctest::Approx(0.2));
  CHECK(cfg.solver.update_mode == SensingUpdateMode::kPerMannSolve);
  CHECK_FALSE(cfg.pilot.design);
  CHECK_FALSE(cfg.classify);
  CHECK(cfg.scenario.region.n_side == 8);

  {
    std::ofstream f(cfg_path);
    f << R"({"scenario": ")" << scen << R"(",
         "solver": {"update_mode": "bogus"}})";
  }
  CHECK_THROWS(ExperimentConfig::load(cfg_path.string()));
}

TEST_CASE("run_experiment on a tiny scene is deterministic") {
  TmpDir tmp;
  ExperimentConfig cfg;
  cfg.scenario_path = write_tiny_scenario();
  cfg.scenario = load_scenario(cfg.scenario_path);
  cfg.output_dir = (kTmp / "out").string();
  cfg.snr_db = {30.0};
  cfg.l_list = {1, 2};
  cfg.pilot.design = false;
  cfg.classify = false;
  cfg.solver.admm_max_iters = 500;
  cfg.solver.mann_max_outer = 100;
  cfg.seed = 7;

  const auto first = run_experiment(cfg);
  REQUIRE(first.size() == 2);
  for (const auto& r : first) {
    CHECK(r.ok);
    CHECK(std::isfinite(r.nmse_db));
    CHECK(r.nmse_db < 5.0);
    CHECK(r.mann_iters >= 1);
    CHECK(r.overhead_reals == 2 * 64 * r.mann_iters);
    CHECK_FALSE(r.config_hash.empty());
  }
  CHECK(first[1].n_bs == 2);

  const auto second = run_experiment(cfg);
  REQUIRE(second.size() == first.size());
  for (size_t i = 0; i < first.size(); ++i)
    CHECK(first[i].deterministic_fields() == second[i].deterministic_fields());
}
