#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "emprop/material_id.hpp"
#include "oracles.hpp"

using namespace emprop;

namespace {

constexpr double kEps0 = 8.8541878128e-12;

std::vector<PixelFeature> blob_features(
    const std::vector<Eigen::Vector2d>& centers, int per_blob, double spread,
    std::uint64_t seed, int n_noise = 0, double noise_span = 10.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  std::uniform_real_distribution<double> u(0.0, noise_span);
  std::vector<PixelFeature> feats;
  int idx = 0;
  for (const auto& c : centers)
    for (int i = 0; i < per_blob; ++i) {
      PixelFeature f;
      f.eps_r = c[0] + g(rng);
      f.sigma_scaled = c[1] + g(rng);
      f.index = idx++;
      feats.push_back(f);
    }
  for (int i = 0; i < n_noise; ++i) {
    PixelFeature f;
    f.eps_r = u(rng);
    f.sigma_scaled = u(rng);
    f.index = idx++;
    feats.push_back(f);
  }
  return feats;
}

std::vector<Eigen::Vector2d> points_of(const std::vector<PixelFeature>& fs) {
  std::vector<Eigen::Vector2d> pts;
  for (const auto& f : fs) pts.emplace_back(f.eps_r, f.sigma_scaled);
  return pts;
}

MaterialDb tiny_db() {
  MaterialDb db;
  db.materials = {{"air", 1.0, 0.0},
                  {"wood", 1.99, 0.005},
                  {"concrete", 5.24, 0.046}};
  db.air_index = 0;
  return db;
}

}  // namespace

TEST_CASE("features_from_s splits the property halves per pixel") {
  VecR s(6);
  s << 0.5, 1.0, 0.0, 0.1, 0.2, 0.3;  // M = 3
  const auto feats = features_from_s(s);
  REQUIRE(feats.size() == 3);
  CHECK(feats[0].eps_r == doctest::Approx(1.5));  // eps_r = 1 + s[m]
  CHECK(feats[0].sigma_scaled == doctest::Approx(0.1));
  CHECK(feats[2].eps_r == doctest::Approx(1.0));
  CHECK(feats[2].sigma_scaled == doctest::Approx(0.3));
  CHECK(feats[1].index == 1);
  CHECK_THROWS(features_from_s(VecR::Ones(5)));  // odd length
}

TEST_CASE("mahalanobis") {
  const Eigen::Vector2d x(3.0, 0.0), y(0.0, 4.0);
  SUBCASE("identity covariance is Euclidean") {
    CHECK(mahalanobis(x, y, Eigen::Matrix2d::Identity()) ==
          doctest::Approx(5.0));
  }
  SUBCASE("diagonal scaling") {
    Eigen::Matrix2d ci = Eigen::Matrix2d::Zero();
    ci(0, 0) = 4.0;
    ci(1, 1) = 0.25;
    // sqrt(4*9 + 0.25*16) = sqrt(40)
    CHECK(mahalanobis(x, y, ci) == doctest::Approx(std::sqrt(40.0)));
  }
  SUBCASE("metric properties") {
    Eigen::Matrix2d ci;
    ci << 2.0, 0.3, 0.3, 1.0;
    CHECK(mahalanobis(x, x, ci) == doctest::Approx(0.0));
    CHECK(mahalanobis(x, y, ci) == doctest::Approx(mahalanobis(y, x, ci)));
  }
}

TEST_CASE("feature_covariance matches the sample covariance") {
  const auto feats = blob_features({{2.0, 1.0}}, 200, 0.5, 3);
  const auto pts = points_of(feats);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size() - 1);
  const Eigen::Matrix2d got = feature_covariance(feats);
  CHECK((got - cov).norm() <= 1e-9 * cov.norm() + 1e-8 * cov.trace());
  // degenerate set stays invertible
  const auto flat = blob_features({{2.0, 1.0}}, 5, 0.0, 4);
  const Eigen::Matrix2d reg = feature_covariance(flat);
  CHECK(reg.determinant() > 0.0);
}

TEST_CASE("dbscan agrees with the brute-force oracle") {
  const Eigen::Matrix2d ci = Eigen::Matrix2d::Identity();
  for (int trial = 0; trial < 5; ++trial) {
    const auto feats = blob_features(
        {{0.0, 0.0}, {6.0, 0.0}, {0.0, 6.0}}, 40, 0.4, 10 + trial, 12);
    const ClusterResult cr = dbscan(feats, 1.2, 4, ci);
    const auto oracle_labels =
        oracle::dbscan_brute(points_of(feats), 1.2, 4, ci);
    CHECK(oracle::adjusted_rand(cr.labels, oracle_labels) ==
          doctest::Approx(1.0));
    CHECK(cr.n_clusters >= 3);  // uniform noise may form a small extra cluster
    // centroid of each cluster is the mean of its members
    for (int c = 0; c < cr.n_clusters; ++c) {
      Eigen::Vector2d mean = Eigen::Vector2d::Zero();
      int n = 0;
      for (size_t i = 0; i < feats.size(); ++i)
        if (cr.labels[i] == c) {
          mean += Eigen::Vector2d(feats[i].eps_r, feats[i].sigma_scaled);
          ++n;
        }
      REQUIRE(n == cr.counts[c]);
      mean /= static_cast<double>(n);
      CHECK((cr.centroids[c] - mean).norm() <= 1e-12);
    }
  }
}

TEST_CASE("dbscan edge cases") {
  const Eigen::Matrix2d ci = Eigen::Matrix2d::Identity();
  SUBCASE("all-noise input") {
    const auto feats = blob_features({{0.0, 0.0}}, 3, 20.0, 21);
    const ClusterResult cr = dbscan(feats, 0.1, 4, ci);
    CHECK(cr.n_clusters == 0);
    for (int l : cr.labels) CHECK(l == -1);
  }
  SUBCASE("single tight blob") {
    const auto feats = blob_features({{1.0, 1.0}}, 30, 0.05, 22);
    const ClusterResult cr = dbscan(feats, 0.5, 4, ci);
    CHECK(cr.n_clusters == 1);
    CHECK(cr.counts[0] == 30);
  }
  SUBCASE("empty input") {
    const ClusterResult cr = dbscan({}, 1.0, 4, ci);
    CHECK(cr.n_clusters == 0);
    CHECK(cr.labels.empty());
  }
  SUBCASE("invalid parameters throw") {
    const auto feats = blob_features({{0.0, 0.0}}, 5, 0.1, 23);
    CHECK_THROWS(dbscan(feats, -1.0, 4, ci));
    CHECK_THROWS(dbscan(feats, 1.0, 0, ci));
  }
}

TEST_CASE("knee_eps separates blob scale from blob spacing") {
  const Eigen::Matrix2d ci = Eigen::Matrix2d::Identity();
  const auto feats =
      blob_features({{0.0, 0.0}, {8.0, 0.0}, {0.0, 8.0}}, 50, 0.3, 31, 8);
  const double eps = knee_eps(feats, 4, ci);
  // knee must land between the intra-blob k-NN scale and the blob spacing
  CHECK(eps > 0.05);
  CHECK(eps < 4.0);
  const ClusterResult cr = dbscan(feats, eps, 4, ci);
  CHECK(cr.n_clusters == 3);
}

TEST_CASE("classify") {
  const MaterialDb db = tiny_db();
  const Eigen::Matrix2d ci = Eigen::Matrix2d::Identity();
  const double omega_c = 2.0 * M_PI * 2.5e9;
  const double scale = omega_c * kEps0;

  ClusterResult cr;
  cr.n_clusters = 3;
  cr.centroids = {{1.99, 0.005 / scale},  // wood
                  {1.01, 0.0},            // air
                  {5.0, 0.046 / scale}};  // concrete-ish
  cr.counts = {10, 10, 10};
  cr.labels = {};

  SUBCASE("nearest material and air cluster detection") {
    const ClassifyResult res = classify(cr, db, ci, omega_c);
    CHECK(res.air_cluster == 1);
    CHECK(res.cluster_material[0] == 1);
    CHECK(res.cluster_material[1] == 0);
    CHECK(res.cluster_material[2] == 2);
    CHECK_FALSE(res.air_only);
  }
  SUBCASE("pixel assignment follows the cluster label, noise is outlier") {
    cr.labels = {0, 1, 2, -1};
    const ClassifyResult res = classify(cr, db, ci, omega_c);
    REQUIRE(res.pixel_material.size() == 4);
    CHECK(res.pixel_material[0] == 1);
    CHECK(res.pixel_material[1] == 0);
    CHECK(res.pixel_material[2] == 2);
    CHECK(res.pixel_material[3] == -1);
  }
  SUBCASE("distance ties break toward the lower db index") {
    MaterialDb twin = db;
    twin.materials.push_back({"wood_copy", 1.99, 0.005});
    ClusterResult one;
    one.n_clusters = 2;
    one.centroids = {{1.0, 0.0}, {1.99, 0.005 / scale}};
    one.counts = {5, 5};
    const ClassifyResult res = classify(one, twin, ci, omega_c);
    CHECK(res.cluster_material[1] == 1);  // wood, not wood_copy
  }
  SUBCASE("air-only flag when the single cluster is air") {
    ClusterResult solo;
    solo.n_clusters = 1;
    solo.centroids = {{1.0, 0.0}};
    solo.counts = {20};
    const ClassifyResult res = classify(solo, db, ci, omega_c);
    CHECK(res.air_cluster == 0);
    CHECK(res.air_only);
  }
  SUBCASE("no clusters at all") {
    ClusterResult none;
    const ClassifyResult res = classify(none, db, ci, omega_c);
    CHECK(res.air_cluster == -1);
    CHECK(res.air_only);
  }
}

TEST_CASE("accuracy") {
  const MaterialDb db = tiny_db();
  TargetMap truth;
  truth.material_db = {{"wood", 1.99, 0.005}, {"concrete", 5.24, 0.046}};
  truth.labels = {0, 1, 1, 2};  // air, wood, wood, concrete

  SUBCASE("perfect assignment") {
    const std::vector<int> pm = {0, 1, 1, 2};
    const AccuracyResult a = accuracy(pm, truth, db);
    CHECK(a.target_only == doctest::Approx(1.0));
    CHECK(a.all_pixels == doctest::Approx(1.0));
    CHECK(a.n_target == 3);
    CHECK(a.n_all == 4);
  }
  SUBCASE("everything air scores zero on targets") {
    const std::vector<int> pm = {0, 0, 0, 0};
    const AccuracyResult a = accuracy(pm, truth, db);
    CHECK(a.target_only == doctest::Approx(0.0));
    CHECK(a.all_pixels == doctest::Approx(0.25));
  }
  SUBCASE("partial credit and outliers counted wrong on targets") {
    const std::vector<int> pm = {-1, 1, 2, -1};
    const AccuracyResult a = accuracy(pm, truth, db);
    CHECK(a.target_only == doctest::Approx(1.0 / 3.0));
    // outlier pixels count as air: correct on the air pixel, wrong on concrete
    CHECK(a.correct_all == 2);
  }
  SUBCASE("no target pixels throws") {
    TargetMap empty;
    empty.material_db = truth.material_db;
    empty.labels = {0, 0};
    CHECK_THROWS(accuracy({0, 0}, empty, db));
  }
}

TEST_CASE("identify end to end on a synthetic scene") {
  const MaterialDb db = tiny_db();
  const double omega_c = 2.0 * M_PI * 2.5e9;
  const double scale = omega_c * kEps0;
  // 100 pixels: 60 air, 25 wood, 15 concrete; small jitter
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 0.02);
  const int m = 100;
  VecR s = VecR::Zero(2 * m);
  std::vector<int> truth_mat(m, 0);
  for (int i = 0; i < m; ++i) {
    int mat = i < 60 ? 0 : (i < 85 ? 1 : 2);
    truth_mat[i] = mat;
    s[i] = db.materials[mat].eps_r - 1.0 + g(rng);
    s[i + m] = db.materials[mat].sigma / scale + g(rng) * 0.1;
  }
  const IdentifyResult res = identify(s, db, omega_c);
  CHECK(res.clusters.n_clusters >= 2);
  CHECK(res.eps > 0.0);
  int correct = 0, assigned = 0;
  for (int i = 60; i < m; ++i) {
    if (res.assignment.pixel_material[i] < 0) continue;
    ++assigned;
    if (res.assignment.pixel_material[i] == truth_mat[i]) ++correct;
  }
  CHECK(assigned >= 30);
  CHECK(correct >= assigned * 9 / 10);
  // eps_override is honored
  const IdentifyResult fixed = identify(s, db, omega_c, 4, res.eps);
  CHECK(fixed.eps == doctest::Approx(res.eps));
  // determinism
  const IdentifyResult again = identify(s, db, omega_c);
  CHECK(again.clusters.labels == res.clusters.labels);
}

TEST_CASE("load_material_db reads the bundled database") {
  const MaterialDb db = load_material_db("/root/proj/assets/materials.txt");
  CHECK(db.materials.size() == 10);
  CHECK(db.air_index >= 0);
  CHECK(db.materials[db.air_index].eps_r == doctest::Approx(1.0));
  CHECK(db.materials[db.air_index].sigma == doctest::Approx(0.0));
  const auto wood = std::find_if(
      db.materials.begin(), db.materials.end(),
      [](const MaterialSpec& ms) { return ms.name == "wood"; });
  REQUIRE(wood != db.materials.end());
  CHECK(wood->eps_r == doctest::Approx(1.99));
  CHECK_THROWS(load_material_db("/nonexistent/materials.txt"));
}
