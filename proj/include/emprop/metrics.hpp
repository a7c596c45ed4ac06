#pragma once

#include <Eigen/Dense>

namespace emprop {

/// NMSE of a reconstructed property vector in dB:
/// 10 log10[(||d_eps||^2 + ||d_sig||^2) / (||eps_r||^2 + ||sig_scaled||^2)]
/// where the estimate/truth halves are eps_r - 1 and sigma/(omega_c eps0);
/// the denominator uses eps_r itself (air contributes 1 per pixel).
/// Perfect reconstructions are floored at -300 dB. Throws on zero-norm
/// truth.
double nmse_db(const Eigen::VectorXd& s_true, const Eigen::VectorXd& s_est);

}  // namespace emprop
