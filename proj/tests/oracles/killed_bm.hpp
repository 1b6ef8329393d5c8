#pragma once

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

/// Transition density of sigma * B started at x and killed on leaving (a, b), by the image series.
inline double killed_bm_density(double t, double x, double z, double a, double b, double sigma = 1.0) {
  if (!(z > a && z < b)) return 0.0;
  const double sd = sigma * std::sqrt(t);
  const double len = b - a;
  auto phi = [sd](double u) { return std::exp(-0.5 * u * u / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
  double total = 0.0;
  for (int n = -20; n <= 20; ++n) {
    const double shift = 2.0 * n * len;
    total += phi(z - x + shift) - phi(z + x - 2.0 * a + shift);
  }
  return total;
}

/// E[L^z] up to min(exit from (a, b), horizon): integral of sigma^2 times the killed density.
inline double killed_bm_local_time(double x, double z, double a, double b, double horizon, double sigma = 1.0) {
  // s = u^2 removes the 1/sqrt(s) singularity at z = x.
  auto f = [&](double u) { return u <= 0.0 ? 0.0 : 2.0 * u * sigma * sigma * killed_bm_density(u * u, x, z, a, b, sigma); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::sqrt(horizon), 15, 1e-12);
}

}  // namespace oracle
