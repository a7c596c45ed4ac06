#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace emprop {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;

using Vec2 = Eigen::Vector2d;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;

/// Uniform n_side x n_side lattice of sampling points covering
/// [center - half_extent, center + half_extent]^2.
/// Point m = row * n_side + col, with col increasing in +x and row
/// increasing in -y (row 0 is the top of the region).
struct GridRegion {
  Vec2 center{0.0, 0.0};
  double half_extent = 1.0;
  int n_side = 0;
  double cell_area = 0.0;
  std::vector<Vec2> points;

  static GridRegion make(const Vec2& center, double half_extent, int n_side);

  int size() const { return n_side * n_side; }
  bool contains(const Vec2& p) const {
    return std::abs(p.x() - center.x()) <= half_extent &&
           std::abs(p.y() - center.y()) <= half_extent;
  }
  std::array<Vec2, 4> corners() const;
};

struct MaterialSpec {
  std::string name;
  double eps_r = 1.0;  // >= 1
  double sigma = 0.0;  // S/m, >= 0
};

/// Per-pixel material labels over a grid. Label 0 = air.
struct TargetMap {
  std::vector<int> labels;
  std::vector<MaterialSpec> material_db;  // label i>0 -> material_db[i-1]

  void validate(int m_expected) const;
  /// EM property vector s = [eps_r - 1 ; sigma / (omega_c * eps0)].
  Eigen::VectorXd property_vector(double omega_c) const;
};

struct UEConfig {
  Vec2 position{0.0, 0.0};
  int n_t = 1;
  double antenna_spacing = 0.0;
  double power_budget = 1.0;     // P_{k,u}, per subcarrier
  double min_region_power = 0.0; // Pbar_{k,u}
  double orientation = 0.0;      // boresight angle in world frame
  std::vector<Vec2> antenna_positions() const;
};

struct BSConfig {
  Vec2 position{0.0, 0.0};
  int n_r = 1;
  double antenna_spacing = 0.0;
  double orientation = 0.0;  // boresight angle in world frame
  std::vector<Vec2> antenna_positions() const;
};

/// Frequency comb centered on f_c: f_k = f_c + (k - (K+1)/2) * delta_f,
/// k = 1..K.
struct SubcarrierGrid {
  double f_c = 0.0;
  double delta_f = 0.0;
  int K = 1;

  double freq(int k) const { return f_c + (k - 0.5 * (K + 1)) * delta_f; }
  double omega(int k) const { return 2.0 * M_PI * freq(k); }
  double omega_c() const { return 2.0 * M_PI * f_c; }
  double wavenumber(int k) const { return omega(k) / kSpeedOfLight; }
  double wavelength(int k) const { return kSpeedOfLight / freq(k); }
};

struct Scenario {
  GridRegion region;
  TargetMap target;
  std::vector<UEConfig> ues;
  std::vector<BSConfig> bss;
  SubcarrierGrid subcarriers;
  int pilot_symbols = 1;  // I
  std::uint64_t seed = 0;

  Eigen::VectorXd s_true() const {
    return target.property_vector(subcarriers.omega_c());
  }
};

/// ULA steering vector, unit l2 norm:
/// a_i = (1/sqrt(N_r)) exp(-j 2 pi / lambda * i * d * sin(theta)).
VecC steering_vector(double theta, int n_r, double lambda, double d);

/// Interval of arrival angles (in the BS array frame, measured from the
/// boresight given by bs.orientation) subtended by the region corners.
/// Throws if the BS lies inside the region.
std::pair<double, double> angular_spread(const BSConfig& bs,
                                         const GridRegion& region);

/// Angle of an arbitrary point in the BS array frame.
double arrival_angle(const BSConfig& bs, const Vec2& p);

/// Receiver beamforming matrix: normalized integral of a(theta) a(theta)^H
/// over the angular spread, midpoint quadrature with n_theta samples
/// (default 16 * N_r). Hermitian PSD with unit trace up to quadrature error.
MatC receiver_beamformer(const BSConfig& bs, const GridRegion& region,
                         double lambda, int n_theta = -1);

/// Seeded uniform placement of UEs in the annulus {r <= radius} \ region.
std::vector<UEConfig> place_ues(int count, int n_t, double antenna_spacing,
                                double power_budget, double radius,
                                const GridRegion& region, std::uint64_t seed);

/// Orientation so that the array is perpendicular to the line from `pos`
/// toward the region center (boresight points at the region).
double boresight_toward(const Vec2& pos, const GridRegion& region);

}  // namespace emprop
