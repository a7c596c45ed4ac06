#include "emprop/hankel.hpp"

#include <cmath>
#include <stdexcept>

namespace emprop {

std::complex<double> hankel2_0(double x) {
  if (!(x > 0.0)) throw std::domain_error("hankel2_0: requires x > 0");
  return {std::cyl_bessel_j(0.0, x), -std::cyl_neumann(0.0, x)};
}

std::complex<double> hankel2_1(double x) {
  if (!(x > 0.0)) throw std::domain_error("hankel2_1: requires x > 0");
  return {std::cyl_bessel_j(1.0, x), -std::cyl_neumann(1.0, x)};
}

}  // namespace emprop
