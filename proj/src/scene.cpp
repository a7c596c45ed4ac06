#include "emprop/scene.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace emprop {

GridRegion GridRegion::make(const Vec2& center, double half_extent,
                            int n_side) {
  if (n_side < 1 || half_extent <= 0.0)
    throw std::invalid_argument("GridRegion: n_side >= 1, half_extent > 0");
  GridRegion g;
  g.center = center;
  g.half_extent = half_extent;
  g.n_side = n_side;
  const double cell = 2.0 * half_extent / n_side;
  g.cell_area = cell * cell;
  g.points.reserve(static_cast<size_t>(n_side) * n_side);
  for (int row = 0; row < n_side; ++row) {
    for (int col = 0; col < n_side; ++col) {
      const double x = center.x() - half_extent + (col + 0.5) * cell;
      const double y = center.y() + half_extent - (row + 0.5) * cell;
      g.points.emplace_back(x, y);
    }
  }
  return g;
}

std::array<Vec2, 4> GridRegion::corners() const {
  const double h = half_extent;
  return {Vec2(center.x() - h, center.y() - h),
          Vec2(center.x() + h, center.y() - h),
          Vec2(center.x() + h, center.y() + h),
          Vec2(center.x() - h, center.y() + h)};
}

void TargetMap::validate(int m_expected) const {
  if (static_cast<int>(labels.size()) != m_expected)
    throw std::invalid_argument("TargetMap: label count mismatch");
  for (int lab : labels) {
    if (lab < 0 || lab > static_cast<int>(material_db.size()))
      throw std::invalid_argument("TargetMap: label out of range");
  }
  for (const auto& m : material_db) {
    if (m.eps_r < 1.0 || m.sigma < 0.0)
      throw std::invalid_argument("MaterialSpec: eps_r >= 1 and sigma >= 0");
  }
}

Eigen::VectorXd TargetMap::property_vector(double omega_c) const {
  const int m_count = static_cast<int>(labels.size());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * m_count);
  for (int m = 0; m < m_count; ++m) {
    if (labels[m] == 0) continue;
    const MaterialSpec& mat = material_db.at(labels[m] - 1);
    s[m] = mat.eps_r - 1.0;
    s[m + m_count] = mat.sigma / (omega_c * kVacuumPermittivity);
  }
  return s;
}

namespace {
std::vector<Vec2> ula_positions(const Vec2& center, int n, double spacing,
                                double boresight) {
  // Array axis is perpendicular to the boresight direction.
  const Vec2 axis(-std::sin(boresight), std::cos(boresight));
  std::vector<Vec2> pos(n);
  for (int i = 0; i < n; ++i) {
    const double off = (i - 0.5 * (n - 1)) * spacing;
    pos[i] = center + off * axis;
  }
  return pos;
}
}  // namespace

std::vector<Vec2> UEConfig::antenna_positions() const {
  return ula_positions(position, n_t, antenna_spacing, orientation);
}

std::vector<Vec2> BSConfig::antenna_positions() const {
  return ula_positions(position, n_r, antenna_spacing, orientation);
}

VecC steering_vector(double theta, int n_r, double lambda, double d) {
  if (n_r < 1 || lambda <= 0.0)
    throw std::invalid_argument("steering_vector: N_r >= 1, lambda > 0");
  VecC a(n_r);
  const double phase_step = -2.0 * M_PI / lambda * d * std::sin(theta);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_r));
  for (int i = 0; i < n_r; ++i)
    a[i] = scale * std::polar(1.0, phase_step * i);
  return a;
}

double arrival_angle(const BSConfig& bs, const Vec2& p) {
  const Vec2 bhat(std::cos(bs.orientation), std::sin(bs.orientation));
  const Vec2 v = p - bs.position;
  const double cross = bhat.x() * v.y() - bhat.y() * v.x();
  const double dot = bhat.dot(v);
  return std::atan2(cross, dot);
}

std::pair<double, double> angular_spread(const BSConfig& bs,
                                         const GridRegion& region) {
  if (region.contains(bs.position))
    throw std::invalid_argument("angular_spread: BS inside region D");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec2& c : region.corners()) {
    const double th = arrival_angle(bs, c);
    lo = std::min(lo, th);
    hi = std::max(hi, th);
  }
  return {lo, hi};
}

MatC receiver_beamformer(const BSConfig& bs, const GridRegion& region,
                         double lambda, int n_theta) {
  const auto [lo, hi] = angular_spread(bs, region);
  const double width = hi - lo;
  if (width <= 0.0) {
    const VecC a = steering_vector(lo, bs.n_r, lambda, bs.antenna_spacing);
    return a * a.adjoint();
  }
  if (n_theta <= 0) n_theta = 16 * bs.n_r;
  MatC p = MatC::Zero(bs.n_r, bs.n_r);
  for (int i = 0; i < n_theta; ++i) {
    const double th = lo + (i + 0.5) * width / n_theta;
    const VecC a = steering_vector(th, bs.n_r, lambda, bs.antenna_spacing);
    p.noalias() += a * a.adjoint();
  }
  return p / static_cast<double>(n_theta);
}

double boresight_toward(const Vec2& pos, const GridRegion& region) {
  const Vec2 d = region.center - pos;
  return std::atan2(d.y(), d.x());
}

std::vector<UEConfig> place_ues(int count, int n_t, double antenna_spacing,
                                double power_budget, double radius,
                                const GridRegion& region, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-radius, radius);
  std::vector<UEConfig> ues;
  ues.reserve(count);
  while (static_cast<int>(ues.size()) < count) {
    const Vec2 p = region.center + Vec2(ux(rng), ux(rng));
    if ((p - region.center).norm() > radius) continue;
    if (region.contains(p)) continue;
    UEConfig ue;
    ue.position = p;
    ue.n_t = n_t;
    ue.antenna_spacing = antenna_spacing;
    ue.power_budget = power_budget;
    ue.orientation = boresight_toward(p, region);
    ues.push_back(ue);
  }
  return ues;
}

}  // namespace emprop
