#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "freebound/errors.hpp"

namespace freebound {

using RealFn = std::function<double(double)>;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Open interval of the state line; endpoints may be infinite.
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  bool contains(double x) const noexcept { return x > lo && x < hi; }
  bool bounded() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }
  double length() const noexcept { return hi - lo; }
  double mid() const noexcept { return 0.5 * (lo + hi); }
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
};

/// Adaptive Gauss-Kronrod (61 points) on [a, b]; a and b may be infinite.
/// Throws NumericError when the error estimate misses max(abs_tol, rel_tol * L1).
/// rel_tol is clamped to the rule's roundoff floor (1e-10, more on short intervals far
/// from 0): below it the Gauss/Kronrod difference is noise and bisection only accumulates it.
/// Split kinked integrands at the kink.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double rel_tol = 1e-12, double abs_tol = 1e-15,
                           const char* what = "quadrature") {
  QuadratureResult out;
  if (a == b) return out;
  rel_tol = std::max(rel_tol, 1e-10);
  if (std::isfinite(a) && std::isfinite(b))
    rel_tol = std::max(rel_tol, 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)) /
                                    std::abs(b - a));
  out.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, rel_tol, &out.error,
                                                                           &out.l1);
  if (!std::isfinite(out.value) || out.error > 10.0 * std::max(abs_tol, rel_tol * out.l1)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s on [%.9g, %.9g] did not converge (value %.3g, error %.3g, L1 %.3g)", what, a,
                  b, out.value, out.error, out.l1);
    throw NumericError(buf, out.error);
  }
  return out;
}

/// Root of a continuous function on a sign-changing bracket, to full double precision.
template <class F>
double find_root(F&& f, double lo, double hi, const char* what = "root finding") {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw NumericError(std::string(what) + ": bracket does not change sign", std::abs(flo));
  }
  std::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(52);
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  if (iters >= 200) throw NumericError(std::string(what) + ": no convergence", r.second - r.first);
  return 0.5 * (r.first + r.second);
}

inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Scaled complementary error function exp(x^2) erfc(x) for x >= 0.
inline double erfcx(double x) noexcept {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  const double inv2 = 1.0 / (x * x);
  const double series = 1.0 + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875 + inv2 * 6.5625)));
  return series / (x * std::sqrt(std::numbers::pi));
}

/// Expected local time (semimartingale normalisation) at level z accumulated by a
/// Brownian bridge from a to b whose quadratic variation over the step is h.
inline double bridge_local_time(double a, double b, double z, double h) noexcept {
  const double s = std::abs(a - z) + std::abs(b - z);
  const double y = s / std::sqrt(2.0 * h);
  const double d = b - a;
  const double exponent = (d * d - s * s) / (2.0 * h);
  if (exponent < -745.0) return 0.0;
  return std::sqrt(0.5 * std::numbers::pi * h) * erfcx(y) * std::exp(exponent);
}

/// Index j with xs[j] <= x < xs[j+1], clamped to [0, n-2].
inline std::size_t bracket_index(const std::vector<double>& xs, double x) noexcept {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t j = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  return std::min(j, xs.size() - 2);
}

/// Piecewise-linear interpolation with constant extension beyond the end nodes.
inline double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys, double x) noexcept {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const std::size_t j = bracket_index(xs, x);
  const double w = (x - xs[j]) / (xs[j + 1] - xs[j]);
  return (1.0 - w) * ys[j] + w * ys[j + 1];
}

/// Monotone cubic Hermite interpolant (Fritsch-Carlson slopes).
class CubicTable {
 public:
  CubicTable() = default;
  CubicTable(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    ds_.assign(n, 0.0);
    std::vector<double> sec(n - 1);
    for (std::size_t j = 0; j + 1 < n; ++j) sec[j] = (ys_[j + 1] - ys_[j]) / (xs_[j + 1] - xs_[j]);
    ds_[0] = sec[0];
    ds_[n - 1] = sec[n - 2];
    for (std::size_t j = 1; j + 1 < n; ++j) {
      if (sec[j - 1] * sec[j] <= 0.0) continue;
      const double h0 = xs_[j] - xs_[j - 1];
      const double h1 = xs_[j + 1] - xs_[j];
      const double w0 = 2.0 * h1 + h0;
      const double w1 = h1 + 2.0 * h0;
      ds_[j] = (w0 + w1) / (w0 / sec[j - 1] + w1 / sec[j]);
    }
  }

  double operator()(double x) const noexcept {
    if (x <= xs_.front()) return ys_.front();
    if (x >= xs_.back()) return ys_.back();
    const std::size_t j = bracket_index(xs_, x);
    const double h = xs_[j + 1] - xs_[j];
    const double s = (x - xs_[j]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * ys_[j] + (s3 - 2 * s2 + s) * h * ds_[j] + (-2 * s3 + 3 * s2) * ys_[j + 1] +
           (s3 - s2) * h * ds_[j + 1];
  }

  const std::vector<double>& nodes() const noexcept { return xs_; }

 private:
  std::vector<double> xs_, ys_, ds_;
};

}  // namespace freebound
