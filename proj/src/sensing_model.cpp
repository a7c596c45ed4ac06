#include "emprop/sensing_model.hpp"

#include <stdexcept>

namespace emprop {

VecC chi_from_s(const VecR& s, double omega_k, double omega_c) {
  const int m_count = static_cast<int>(s.size()) / 2;
  if (s.size() != 2 * m_count)
    throw std::invalid_argument("chi_from_s: s must have even length");
  const double w = omega_c / omega_k;
  VecC chi(m_count);
  for (int m = 0; m < m_count; ++m)
    chi[m] = std::complex<double>(s[m], w * s[m + m_count]);
  return chi;
}

namespace {
/// Column-wise Khatri-Rao: out column m = ct.col(m) kron ph2.col(m).
MatC khatri_rao(const MatC& ct, const MatC& ph2) {
  const int m_count = static_cast<int>(ct.cols());
  const int ui = static_cast<int>(ct.rows());
  const int n_r = static_cast<int>(ph2.rows());
  MatC d(static_cast<long>(ui) * n_r, m_count);
  for (int m = 0; m < m_count; ++m)
    for (int j = 0; j < ui; ++j)
      d.col(m).segment(static_cast<long>(j) * n_r, n_r) =
          ct(j, m) * ph2.col(m);
  return d;
}
}  // namespace

MatC sensing_matrix(const VecC& chi, const MatC& hbar1, const MatC& ph2,
                    const MatC& greens) {
  // C^T = Hbar1^T (I - G diag chi)^{-T} = ((I - G diag chi)^{-1} Hbar1)^T.
  MatC sys = -greens * chi.asDiagonal().toDenseMatrix();
  sys.diagonal().array() += 1.0;
  Eigen::PartialPivLU<MatC> lu(sys);
  if (!(lu.rcond() > 1e-12))
    throw std::runtime_error("sensing_matrix: singular LS system");
  const MatC z = lu.solve(hbar1);
  return khatri_rao(z.transpose(), ph2);
}

MatC born_init(const MatC& hbar1, const MatC& ph2) {
  return khatri_rao(hbar1.transpose(), ph2);
}

SensingBlock realify(const MatC& d, double omega_k, double omega_c,
                     const VecC& y) {
  const long rows = d.rows();
  const long cols = d.cols();
  const double w = omega_c / omega_k;
  SensingBlock b;
  b.weight = w;
  b.e.resize(2 * rows, 2 * cols);
  b.e.topLeftCorner(rows, cols) = d.real();
  b.e.topRightCorner(rows, cols) = -w * d.imag();
  b.e.bottomLeftCorner(rows, cols) = d.imag();
  b.e.bottomRightCorner(rows, cols) = w * d.real();
  b.z.resize(2 * rows);
  b.z.head(rows) = y.real();
  b.z.tail(rows) = y.imag();
  return b;
}

StackedSystem stack(const std::vector<SensingBlock>& blocks) {
  if (blocks.empty()) throw std::invalid_argument("stack: no blocks");
  const long cols = blocks.front().e.cols();
  long rows = 0;
  for (const auto& b : blocks) {
    if (b.e.cols() != cols)
      throw std::invalid_argument("stack: mismatched column counts");
    rows += b.e.rows();
  }
  StackedSystem sys;
  sys.e.resize(rows, cols);
  sys.z.resize(rows);
  long at = 0;
  for (const auto& b : blocks) {
    sys.e.middleRows(at, b.e.rows()) = b.e;
    sys.z.segment(at, b.z.size()) = b.z;
    at += b.e.rows();
  }
  return sys;
}

namespace {
void accumulate_impl(NormalEquations& ne, const MatC& d, double weight,
                     const VecC& y, bool parallel) {
  const long m_count = d.cols();
  // Column-by-column in both paths so the serial reference is bitwise
  // identical to the parallel kernel.
  MatC c(m_count, m_count);
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (long j = 0; j < m_count; ++j)
      c.col(j).noalias() = d.adjoint() * d.col(j);
  } else {
    for (long j = 0; j < m_count; ++j)
      c.col(j).noalias() = d.adjoint() * d.col(j);
  }
  const MatR p = c.real();
  const MatR q = c.imag();
  const double w = weight;
  ne.gram.topLeftCorner(m_count, m_count) += p;
  ne.gram.topRightCorner(m_count, m_count) -= w * q;
  ne.gram.bottomLeftCorner(m_count, m_count) += w * q;
  ne.gram.bottomRightCorner(m_count, m_count) += w * w * p;
  const VecC t = d.adjoint() * y;
  ne.beta.head(m_count) += t.real();
  ne.beta.tail(m_count) += w * t.imag();
  ne.z_sq += y.squaredNorm();
  ne.rows += 2 * d.rows();
}
}  // namespace

void NormalEquations::accumulate(const MatC& d, double weight, const VecC& y) {
  accumulate_impl(*this, d, weight, y, true);
}

void NormalEquations::accumulate_serial(const MatC& d, double weight,
                                        const VecC& y) {
  accumulate_impl(*this, d, weight, y, false);
}

NormalEquations NormalEquations::from_stacked(const StackedSystem& sys) {
  NormalEquations ne;
  ne.gram = sys.e.transpose() * sys.e;
  ne.beta = sys.e.transpose() * sys.z;
  ne.z_sq = sys.z.squaredNorm();
  ne.rows = sys.e.rows();
  return ne;
}

namespace {
template <typename PerBlock>
void for_each_block(const ForwardModel& fm, int l, const VecR& s_est,
                    const std::vector<MatC>* greens, PerBlock&& fn) {
  if (fm.hbar1.empty())
    throw std::logic_error("build_normal_equations: pilots not set");
  const auto& sc = *fm.scenario;
  const double omega_c = sc.subcarriers.omega_c();
  const bool born = s_est.size() == 0 || s_est.isZero(0.0);
  for (int ks = 0; ks < fm.n_k(); ++ks) {
    const double omega_k = sc.subcarriers.omega(ks + 1);
    MatC d;
    if (born) {
      d = born_init(fm.hbar1[ks], fm.ph2[ks][l]);
    } else {
      const VecC chi = chi_from_s(s_est, omega_k, omega_c);
      const MatC g = greens ? (*greens)[ks] : fm.greens(ks);
      d = sensing_matrix(chi, fm.hbar1[ks], fm.ph2[ks][l], g);
    }
    fn(d, omega_c / omega_k, ks);
  }
}
}  // namespace

NormalEquations build_normal_equations(const ForwardModel& fm, int l,
                                       const Measurements& meas,
                                       const VecR& s_est,
                                       const std::vector<MatC>* greens) {
  NormalEquations ne = NormalEquations::zero(2 * fm.grid_size());
  for_each_block(fm, l, s_est, greens,
                 [&](const MatC& d, double w, int ks) {
                   ne.accumulate(d, w, meas.y[ks][l]);
                 });
  return ne;
}

void refresh_rhs(NormalEquations& ne, const ForwardModel& fm, int l,
                 const Measurements& meas, const VecR& s_est,
                 const std::vector<MatC>* greens) {
  const int m_count = fm.grid_size();
  ne.beta.setZero();
  ne.z_sq = 0.0;
  ne.rows = 0;
  for_each_block(fm, l, s_est, greens,
                 [&](const MatC& d, double w, int ks) {
                   const VecC& y = meas.y[ks][l];
                   const VecC t = d.adjoint() * y;
                   ne.beta.head(m_count) += t.real();
                   ne.beta.tail(m_count) += w * t.imag();
                   ne.z_sq += y.squaredNorm();
                   ne.rows += 2 * d.rows();
                 });
}

}  // namespace emprop
