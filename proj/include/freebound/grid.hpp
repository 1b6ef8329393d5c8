#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "freebound/errors.hpp"
#include "freebound/numerics.hpp"

namespace freebound {

/// Space nodes (strictly increasing, atoms included exactly) and uniform time nodes on [0, T].
struct SpaceTimeGrid {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<std::size_t> atom_nodes;

  std::size_t nx() const noexcept { return x.size(); }
  std::size_t levels() const noexcept { return t.size(); }
  std::size_t steps() const noexcept { return t.size() - 1; }
  double horizon() const noexcept { return t.back(); }
  double dt() const noexcept { return t[1] - t[0]; }
  Interval truncation() const noexcept { return {x.front(), x.back()}; }
  double max_dx() const {
    double m = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i] - x[i - 1]);
    return m;
  }
  double min_dx() const {
    double m = kInf;
    for (std::size_t i = 1; i < x.size(); ++i) m = std::min(m, x[i] - x[i - 1]);
    return m;
  }
  /// Index of the node closest to x.
  std::size_t nearest(double xv) const {
    const std::size_t j = bracket_index(x, xv);
    return (xv - x[j] <= x[j + 1] - xv) ? j : j + 1;
  }
  std::size_t nearest_level(double tv) const {
    const double k = std::round(tv / dt());
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(steps())));
  }
};

/// Builds nx space nodes on [x_min, x_max] and nt uniform time steps. With grading > 0 the
/// node density near each atom is raised by up to a factor 1 + grading. The node nearest to
/// each atom is then moved onto the atom.
inline SpaceTimeGrid make_grid(double x_min, double x_max, std::size_t nx, double horizon, std::size_t nt,
                               const std::vector<double>& atoms = {}, double grading = 0.0) {
  if (!(x_max > x_min)) throw DomainError("grid window must satisfy x_min < x_max");
  if (nx < 3 || nt < 1) throw DomainError("grid needs at least 3 space nodes and one time step");
  if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
  if (grading < 0.0 || grading > 9.0) throw DomainError("grading must lie in [0, 9]");
  SpaceTimeGrid g;
  g.x.resize(nx);
  if (grading == 0.0 || atoms.empty()) {
    for (std::size_t i = 0; i < nx; ++i) g.x[i] = x_min + (x_max - x_min) * static_cast<double>(i) / (nx - 1);
  } else {
    const double width = (x_max - x_min) / 20.0;
    auto density = [&](double x) {
      double d = 1.0;
      for (double a : atoms) d += grading * std::exp(-0.5 * (x - a) * (x - a) / (width * width));
      return d;
    };
    const std::size_t fine = 64 * nx;
    std::vector<double> xf(fine + 1), cum(fine + 1, 0.0);
    for (std::size_t j = 0; j <= fine; ++j) xf[j] = x_min + (x_max - x_min) * static_cast<double>(j) / fine;
    for (std::size_t j = 1; j <= fine; ++j) cum[j] = cum[j - 1] + 0.5 * (density(xf[j - 1]) + density(xf[j])) * (xf[j] - xf[j - 1]);
    for (std::size_t i = 0; i < nx; ++i) {
      const double target = cum.back() * static_cast<double>(i) / (nx - 1);
      g.x[i] = interp_linear(cum, xf, target);
    }
    g.x.front() = x_min;
    g.x.back() = x_max;
  }
  for (double a : atoms) {
    if (!(a > x_min && a < x_max)) throw DomainError("atom at x=" + std::to_string(a) + " lies outside the grid window");
    const std::size_t k = g.nearest(a);
    if (k == 0 || k + 1 == nx) throw DomainError("atom at x=" + std::to_string(a) + " is too close to the grid edge");
    if (std::find(g.atom_nodes.begin(), g.atom_nodes.end(), k) != g.atom_nodes.end())
      throw DomainError("two atoms snap to the same grid node; refine the grid");
    g.x[k] = a;
    g.atom_nodes.push_back(k);
  }
  for (std::size_t i = 1; i < nx; ++i)
    if (!(g.x[i] > g.x[i - 1])) throw DomainError("grid nodes are not strictly increasing after atom snapping");
  if (g.max_dx() > 10.0 * g.min_dx()) throw DomainError("grid spacing ratio exceeds 10");
  g.t.resize(nt + 1);
  for (std::size_t k = 0; k <= nt; ++k) g.t[k] = horizon * static_cast<double>(k) / static_cast<double>(nt);
  g.t.back() = horizon;
  return g;
}

}  // namespace freebound
