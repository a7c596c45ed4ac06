#include "emprop/material_id.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace emprop {

std::vector<PixelFeature> features_from_s(const VecR& s) {
  const int m_count = static_cast<int>(s.size()) / 2;
  if (s.size() != 2 * m_count || m_count == 0)
    throw std::invalid_argument("features_from_s: bad property vector size");
  std::vector<PixelFeature> feats(m_count);
  for (int m = 0; m < m_count; ++m) {
    feats[m].eps_r = 1.0 + s[m];
    feats[m].sigma_scaled = s[m + m_count];
    feats[m].index = m;
  }
  return feats;
}

double mahalanobis(const Eigen::Vector2d& x, const Eigen::Vector2d& y,
                   const Eigen::Matrix2d& cov_inv) {
  const Eigen::Vector2d d = x - y;
  const double q = d.dot(cov_inv * d);
  return std::sqrt(std::max(q, 0.0));
}

Eigen::Matrix2d feature_covariance(const std::vector<PixelFeature>& feats) {
  if (feats.empty())
    throw std::invalid_argument("feature_covariance: no features");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& f : feats) mean += Eigen::Vector2d(f.eps_r, f.sigma_scaled);
  mean /= double(feats.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& f : feats) {
    const Eigen::Vector2d d =
        Eigen::Vector2d(f.eps_r, f.sigma_scaled) - mean;
    cov += d * d.transpose();
  }
  cov /= std::max<double>(1.0, double(feats.size()) - 1.0);
  double reg = 1e-9 * cov.trace();
  if (reg <= 0.0) reg = 1e-12;
  cov += reg * Eigen::Matrix2d::Identity();
  return cov;
}

namespace {
std::vector<std::vector<int>> neighbor_lists(
    const std::vector<PixelFeature>& feats, double eps,
    const Eigen::Matrix2d& cov_inv) {
  const int n = static_cast<int>(feats.size());
  std::vector<std::vector<int>> nbrs(n);
#pragma omp parallel for schedule(dynamic, 32)
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d xi(feats[i].eps_r, feats[i].sigma_scaled);
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d xj(feats[j].eps_r, feats[j].sigma_scaled);
      if (mahalanobis(xi, xj, cov_inv) <= eps) nbrs[i].push_back(j);
    }
  }
  return nbrs;
}
}  // namespace

ClusterResult dbscan(const std::vector<PixelFeature>& feats, double eps,
                     int min_pts, const Eigen::Matrix2d& cov_inv) {
  if (eps <= 0.0 || min_pts < 1)
    throw std::invalid_argument("dbscan: eps > 0 and min_pts >= 1 required");
  const int n = static_cast<int>(feats.size());
  const auto nbrs = neighbor_lists(feats, eps, cov_inv);

  ClusterResult out;
  out.labels.assign(n, -2);  // -2 = unvisited, -1 = noise
  int cluster = 0;
  for (int i = 0; i < n; ++i) {
    if (out.labels[i] != -2) continue;
    if (static_cast<int>(nbrs[i].size()) < min_pts) {
      out.labels[i] = -1;
      continue;
    }
    out.labels[i] = cluster;
    std::deque<int> frontier(nbrs[i].begin(), nbrs[i].end());
    while (!frontier.empty()) {
      const int j = frontier.front();
      frontier.pop_front();
      if (out.labels[j] == -1) out.labels[j] = cluster;  // border point
      if (out.labels[j] != -2) continue;
      out.labels[j] = cluster;
      if (static_cast<int>(nbrs[j].size()) >= min_pts)
        frontier.insert(frontier.end(), nbrs[j].begin(), nbrs[j].end());
    }
    ++cluster;
  }
  out.n_clusters = cluster;
  out.centroids.assign(cluster, Eigen::Vector2d::Zero());
  out.counts.assign(cluster, 0);
  for (int i = 0; i < n; ++i) {
    const int c = out.labels[i];
    if (c < 0) continue;
    out.centroids[c] += Eigen::Vector2d(feats[i].eps_r, feats[i].sigma_scaled);
    ++out.counts[c];
  }
  for (int c = 0; c < cluster; ++c) out.centroids[c] /= double(out.counts[c]);
  return out;
}

double knee_eps(const std::vector<PixelFeature>& feats, int min_pts,
                const Eigen::Matrix2d& cov_inv) {
  const int n = static_cast<int>(feats.size());
  if (n <= min_pts)
    throw std::invalid_argument("knee_eps: too few points");
  std::vector<double> knn(n);
#pragma omp parallel for schedule(dynamic, 32)
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d xi(feats[i].eps_r, feats[i].sigma_scaled);
    std::vector<double> d;
    d.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      d.push_back(mahalanobis(
          xi, Eigen::Vector2d(feats[j].eps_r, feats[j].sigma_scaled),
          cov_inv));
    }
    std::nth_element(d.begin(), d.begin() + (min_pts - 1), d.end());
    knn[i] = d[min_pts - 1];
  }
  std::sort(knn.begin(), knn.end());

  // Knee = point on the sorted curve farthest from the chord joining its
  // endpoints (x normalized to [0, 1]).
  const double y0 = knn.front(), y1 = knn.back();
  if (y1 - y0 < 1e-15) return std::max(y1, 1e-12) * 1.5;
  double best = -1.0, eps = y1;
  for (int i = 0; i < n; ++i) {
    const double x = double(i) / double(n - 1);
    // distance to chord (0, y0) -> (1, y1), up to a constant factor
    const double dist = std::abs((y1 - y0) * x - (knn[i] - y0));
    if (dist > best) {
      best = dist;
      eps = knn[i];
    }
  }
  return std::max(eps, 1e-12);
}

MaterialDb load_material_db(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_material_db: cannot open " + path);
  MaterialDb db;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    MaterialSpec m;
    if (!(ls >> m.name >> m.eps_r >> m.sigma)) continue;
    if (m.eps_r < 1.0 || m.sigma < 0.0)
      throw std::runtime_error("load_material_db: invalid entry " + m.name);
    if (db.air_index < 0 && m.eps_r == 1.0 && m.sigma == 0.0)
      db.air_index = static_cast<int>(db.materials.size());
    db.materials.push_back(std::move(m));
  }
  if (db.materials.empty())
    throw std::runtime_error("load_material_db: empty database " + path);
  return db;
}

ClassifyResult classify(const ClusterResult& clusters, const MaterialDb& db,
                        const Eigen::Matrix2d& cov_inv, double omega_c) {
  if (db.materials.empty() || db.air_index < 0)
    throw std::invalid_argument("classify: db must contain air (1, 0)");
  ClassifyResult out;
  out.cluster_material.assign(clusters.n_clusters, -1);
  out.pixel_material.assign(clusters.labels.size(), -1);
  if (clusters.n_clusters == 0) {
    out.air_only = true;
    return out;
  }

  // Air cluster: centroid nearest (1, 0) in the whitened metric.
  const Eigen::Vector2d air_pt(1.0, 0.0);
  double best_air = std::numeric_limits<double>::infinity();
  for (int c = 0; c < clusters.n_clusters; ++c) {
    const double d = mahalanobis(clusters.centroids[c], air_pt, cov_inv);
    if (d < best_air) {
      best_air = d;
      out.air_cluster = c;
    }
  }

  const double sigma_scale = omega_c * kVacuumPermittivity;
  out.air_only = clusters.n_clusters == 1;
  for (int c = 0; c < clusters.n_clusters; ++c) {
    if (c == out.air_cluster) {
      out.cluster_material[c] = db.air_index;
      continue;
    }
    int best_idx = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < db.materials.size(); ++i) {
      const Eigen::Vector2d mat(db.materials[i].eps_r,
                                db.materials[i].sigma / sigma_scale);
      const double d = mahalanobis(clusters.centroids[c], mat, cov_inv);
      if (d < best_d) {  // strict: ties keep the lower db index
        best_d = d;
        best_idx = static_cast<int>(i);
      }
    }
    out.cluster_material[c] = best_idx;
  }
  for (size_t i = 0; i < clusters.labels.size(); ++i)
    if (clusters.labels[i] >= 0)
      out.pixel_material[i] = out.cluster_material[clusters.labels[i]];
  return out;
}

AccuracyResult accuracy(const std::vector<int>& pixel_material,
                        const TargetMap& truth, const MaterialDb& db) {
  if (pixel_material.size() != truth.labels.size())
    throw std::invalid_argument("accuracy: size mismatch");
  // Truth labels reference truth.material_db; map those into db by name.
  std::vector<int> label_to_db(truth.material_db.size(), -1);
  for (size_t i = 0; i < truth.material_db.size(); ++i)
    for (size_t j = 0; j < db.materials.size(); ++j)
      if (db.materials[j].name == truth.material_db[i].name) {
        label_to_db[i] = static_cast<int>(j);
        break;
      }

  AccuracyResult out;
  for (size_t m = 0; m < truth.labels.size(); ++m) {
    const int lbl = truth.labels[m];
    const int want = lbl == 0 ? db.air_index : label_to_db[lbl - 1];
    // Unassigned (outlier) pixels count as air.
    const int got = pixel_material[m] < 0 ? db.air_index : pixel_material[m];
    const bool ok = got == want;
    ++out.n_all;
    out.correct_all += ok;
    if (lbl != 0) {
      ++out.n_target;
      out.correct_target += ok;
    }
  }
  if (out.n_target == 0)
    throw std::invalid_argument("accuracy: target map has no target pixels");
  out.target_only = double(out.correct_target) / out.n_target;
  out.all_pixels = double(out.correct_all) / out.n_all;
  return out;
}

IdentifyResult identify(const VecR& s_est, const MaterialDb& db,
                        double omega_c, int min_pts, double eps_override) {
  IdentifyResult out;
  const auto feats = features_from_s(s_est);
  out.cov_inv = feature_covariance(feats).inverse();
  out.eps = eps_override > 0.0 ? eps_override
                               : knee_eps(feats, min_pts, out.cov_inv);
  out.clusters = dbscan(feats, out.eps, min_pts, out.cov_inv);
  out.assignment = classify(out.clusters, db, out.cov_inv, omega_c);
  return out;
}

}  // namespace emprop
