#pragma once

#include <complex>

namespace emprop {

/// Hankel functions of the second kind, H_n^(2)(x) = J_n(x) - j Y_n(x),
/// for real x > 0. Orders 0 and 1 are the only ones the 2D Helmholtz
/// kernel and the MoM self term need.
std::complex<double> hankel2_0(double x);
std::complex<double> hankel2_1(double x);

}  // namespace emprop
