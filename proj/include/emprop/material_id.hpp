#pragma once

#include <string>
#include <vector>

#include "emprop/scene.hpp"
#include "emprop/sensing_model.hpp"

namespace emprop {

struct PixelFeature {
  double eps_r = 1.0;
  double sigma_scaled = 0.0;  // sigma / (omega_c eps0)
  int index = 0;              // grid index
};

struct ClusterResult {
  std::vector<int> labels;  // per pixel; -1 = noise
  std::vector<Eigen::Vector2d> centroids;
  std::vector<int> counts;
  int n_clusters = 0;
};

struct ClassifyResult {
  std::vector<int> cluster_material;  // per cluster, index into db
  std::vector<int> pixel_material;    // per pixel; -1 = outlier
  int air_cluster = -1;               // -1 when no clusters at all
  bool air_only = false;              // no non-air cluster found
};

/// Property vector halves -> per-pixel feature pairs (eps_r, sigma_scaled).
std::vector<PixelFeature> features_from_s(const VecR& s);

/// sqrt((x - y)^T cov_inv (x - y)); cov_inv must be SPD.
double mahalanobis(const Eigen::Vector2d& x, const Eigen::Vector2d& y,
                   const Eigen::Matrix2d& cov_inv);

/// Sample covariance of the feature pairs, regularized by 1e-9 trace I so
/// degenerate point sets stay invertible.
Eigen::Matrix2d feature_covariance(const std::vector<PixelFeature>& feats);

/// Plain O(M^2) DBSCAN under the Mahalanobis metric; deterministic for a
/// fixed point order, noise labeled -1.
ClusterResult dbscan(const std::vector<PixelFeature>& feats, double eps,
                     int min_pts, const Eigen::Matrix2d& cov_inv);

/// Knee of the sorted min_pts-NN distance curve: the point of maximum
/// distance to the chord joining the curve's endpoints.
double knee_eps(const std::vector<PixelFeature>& feats, int min_pts,
                const Eigen::Matrix2d& cov_inv);

struct MaterialDb {
  std::vector<MaterialSpec> materials;
  int air_index = -1;  // entry with eps_r = 1, sigma = 0
};

MaterialDb load_material_db(const std::string& path);

/// Air cluster = centroid Mahalanobis-nearest to (1, 0); remaining clusters
/// get the argmin-distance material in scaled feature coordinates. Distance
/// ties break toward the lower db index.
ClassifyResult classify(const ClusterResult& clusters, const MaterialDb& db,
                        const Eigen::Matrix2d& cov_inv, double omega_c);

struct AccuracyResult {
  double target_only = 0.0;  // correct / ground-truth target pixels
  double all_pixels = 0.0;   // correct / all pixels, air counted
  int correct_target = 0;
  int n_target = 0;
  int correct_all = 0;
  int n_all = 0;
};

/// Per-pixel material assignment against the ground-truth map. Truth label
/// for a target pixel is its material index matched into db by name;
/// air/outlier pixels count as db air. Throws when the map has no target
/// pixels.
AccuracyResult accuracy(const std::vector<int>& pixel_material,
                        const TargetMap& truth, const MaterialDb& db);

/// Full pipeline: features -> covariance -> knee eps (unless eps_override
/// > 0) -> dbscan -> classify.
struct IdentifyResult {
  ClusterResult clusters;
  ClassifyResult assignment;
  Eigen::Matrix2d cov_inv;
  double eps = 0.0;
};

IdentifyResult identify(const VecR& s_est, const MaterialDb& db,
                        double omega_c, int min_pts = 4,
                        double eps_override = -1.0);

}  // namespace emprop
