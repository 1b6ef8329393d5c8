#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freebound/diffusion.hpp"
#include "freebound/errors.hpp"
#include "freebound/grid.hpp"
#include "freebound/numerics.hpp"
#include "freebound/payoff.hpp"

namespace freebound {

struct PsorParams {
  double omega = 1.5;
  double tol = 1e-12;
  std::size_t max_iter = 100000;
};

struct SchemeParams {
  double theta = 0.5;
  std::size_t rannacher_steps = 2;
  PsorParams psor;
  bool brennan_schwartz = true;  ///< try the direct one-sided sweep before PSOR
};

struct SolveStats {
  std::size_t psor_levels = 0;
  std::size_t direct_levels = 0;
  std::size_t max_psor_iterations = 0;
  std::vector<std::string> warnings;
};

/// Value function on a space-time grid. Arrays are row-major by time level:
/// index(k, i) addresses t[k], x[i]; level 0 is t = 0 and the last level is t = T.
struct ValueSurface {
  SpaceTimeGrid grid;
  std::vector<double> v;
  std::vector<double> g;      ///< gain per space node
  std::vector<double> sigma;  ///< volatility per space node
  std::vector<double> rate;   ///< discount rate per space node
  std::vector<double> profit; ///< running profit per space node
  std::vector<std::uint8_t> mask;
  std::vector<double> residual;
  std::vector<double> dv_dt, dv_dx, d2v_dx2;
  double tol_b = 0.0;
  SolveStats stats;

  std::size_t nx() const noexcept { return grid.nx(); }
  std::size_t levels() const noexcept { return grid.levels(); }
  std::size_t index(std::size_t k, std::size_t i) const noexcept { return k * grid.nx() + i; }
  double at(std::size_t k, std::size_t i) const noexcept { return v[index(k, i)]; }
  double excess(std::size_t k, std::size_t i) const noexcept { return v[index(k, i)] - g[i]; }
  bool stopped(std::size_t k, std::size_t i) const noexcept { return mask[index(k, i)] != 0; }

  /// Bilinear interpolation of a level-major field.
  double interpolate(const std::vector<double>& field, double t, double x) const {
    const auto& xs = grid.x;
    x = std::clamp(x, xs.front(), xs.back());
    t = std::clamp(t, 0.0, grid.horizon());
    const std::size_t i = bracket_index(xs, x);
    const double wx = (x - xs[i]) / (xs[i + 1] - xs[i]);
    const double kt = t / grid.dt();
    const auto k = static_cast<std::size_t>(std::min(std::floor(kt), static_cast<double>(grid.steps() - 1)));
    const double wt = std::clamp(kt - static_cast<double>(k), 0.0, 1.0);
    auto row = [&](std::size_t kk) {
      return (1.0 - wx) * field[index(kk, i)] + wx * field[index(kk, i + 1)];
    };
    return (1.0 - wt) * row(k) + wt * row(k + 1);
  }

  double value(double t, double x) const { return interpolate(v, t, x); }

  /// v - g interpolated bilinearly (nonnegative).
  double excess_at(double t, double x) const {
    const auto& xs = grid.x;
    x = std::clamp(x, xs.front(), xs.back());
    t = std::clamp(t, 0.0, grid.horizon());
    const std::size_t i = bracket_index(xs, x);
    const double wx = (x - xs[i]) / (xs[i + 1] - xs[i]);
    const double kt = t / grid.dt();
    const auto k = static_cast<std::size_t>(std::min(std::floor(kt), static_cast<double>(grid.steps() - 1)));
    const double wt = std::clamp(kt - static_cast<double>(k), 0.0, 1.0);
    auto row = [&](std::size_t kk) { return (1.0 - wx) * excess(kk, i) + wx * excess(kk, i + 1); };
    return (1.0 - wt) * row(k) + wt * row(k + 1);
  }

  /// Cubic (4-point Lagrange) interpolation in x at time level k.
  double value_cubic(std::size_t k, double x) const {
    const auto& xs = grid.x;
    const std::size_t n = xs.size();
    std::size_t j = bracket_index(xs, x);
    const std::size_t s = std::clamp<std::size_t>(j == 0 ? 0 : j - 1, 0, n - 4);
    double out = 0.0;
    for (std::size_t a = s; a < s + 4; ++a) {
      double w = 1.0;
      for (std::size_t b = s; b < s + 4; ++b)
        if (b != a) w *= (x - xs[b]) / (xs[a] - xs[b]);
      out += w * at(k, a);
    }
    return out;
  }
};

namespace detail {

/// Tridiagonal system over the interior unknowns.
struct Tridiag {
  std::vector<double> lower, diag, upper, rhs;
  explicit Tridiag(std::size_t m) : lower(m), diag(m), upper(m), rhs(m) {}
  std::size_t size() const noexcept { return diag.size(); }
  double row(const std::vector<double>& w, std::size_t i) const noexcept {
    double r = diag[i] * w[i] - rhs[i];
    if (i > 0) r += lower[i] * w[i - 1];
    if (i + 1 < size()) r += upper[i] * w[i + 1];
    return r;
  }
};

enum class ExerciseSide { left, right };

/// Direct projected sweep: exact LCP solution when the exercise set is an interval
/// touching the given side of the window.
inline void brennan_schwartz(const Tridiag& a, const std::vector<double>& psi, ExerciseSide side,
                             std::vector<double>& w) {
  const std::size_t m = a.size();
  std::vector<double> d(m), r(m);
  if (side == ExerciseSide::left) {
    d[m - 1] = a.diag[m - 1];
    r[m - 1] = a.rhs[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) {
      const double f = a.upper[i] / d[i + 1];
      d[i] = a.diag[i] - f * a.lower[i + 1];
      r[i] = a.rhs[i] - f * r[i + 1];
    }
    w[0] = std::max(r[0] / d[0], psi[0]);
    for (std::size_t i = 1; i < m; ++i) w[i] = std::max((r[i] - a.lower[i] * w[i - 1]) / d[i], psi[i]);
  } else {
    d[0] = a.diag[0];
    r[0] = a.rhs[0];
    for (std::size_t i = 1; i < m; ++i) {
      const double f = a.lower[i] / d[i - 1];
      d[i] = a.diag[i] - f * a.upper[i - 1];
      r[i] = a.rhs[i] - f * r[i - 1];
    }
    w[m - 1] = std::max(r[m - 1] / d[m - 1], psi[m - 1]);
    for (std::size_t i = m - 1; i-- > 0;) w[i] = std::max((r[i] - a.upper[i] * w[i + 1]) / d[i], psi[i]);
  }
}

/// True when w solves the complementarity problem w >= psi, Aw - b >= 0, (w - psi)(Aw - b) = 0.
inline bool is_lcp_solution(const Tridiag& a, const std::vector<double>& psi, const std::vector<double>& w,
                            double tol) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double res = a.row(w, i);
    if (w[i] < psi[i]) return false;
    if (res < -tol) return false;
    if (w[i] - psi[i] > tol && std::abs(res) > tol) return false;
  }
  return true;
}

/// Largest |min(Aw - b, w - psi)|.
inline double lcp_residual(const Tridiag& a, const std::vector<double>& psi, const std::vector<double>& w) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(std::min(a.row(w, i), w[i] - psi[i])));
  return worst;
}

/// Projected SOR from the warm start in w. Returns the iteration count, or max_iter + 1 on failure.
inline std::size_t psor(const Tridiag& a, const std::vector<double>& psi, const PsorParams& p, std::vector<double>& w) {
  const std::size_t m = a.size();
  for (std::size_t it = 1; it <= p.max_iter; ++it) {
    double change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = a.rhs[i];
      if (i > 0) s -= a.lower[i] * w[i - 1];
      if (i + 1 < m) s -= a.upper[i] * w[i + 1];
      const double gs = s / a.diag[i];
      const double next = std::max(psi[i], w[i] + p.omega * (gs - w[i]));
      change = std::max(change, std::abs(next - w[i]));
      w[i] = next;
    }
    if (change < p.tol) return it;
  }
  return p.max_iter + 1;
}

}  // namespace detail

/// Central differences in the interior, one-sided at the edges.
inline void derivative_fields(ValueSurface& s) {
  const auto& xs = s.grid.x;
  const std::size_t nx = s.nx(), nl = s.levels();
  const double dt = s.grid.dt();
  s.dv_dt.assign(s.v.size(), 0.0);
  s.dv_dx.assign(s.v.size(), 0.0);
  s.d2v_dx2.assign(s.v.size(), 0.0);
  for (std::size_t k = 0; k < nl; ++k) {
    for (std::size_t i = 0; i < nx; ++i) {
      double dtv;
      if (k == 0)
        dtv = (s.at(1, i) - s.at(0, i)) / dt;
      else if (k + 1 == nl)
        dtv = (s.at(k, i) - s.at(k - 1, i)) / dt;
      else
        dtv = (s.at(k + 1, i) - s.at(k - 1, i)) / (2.0 * dt);
      s.dv_dt[s.index(k, i)] = dtv;
    }
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t c = std::clamp<std::size_t>(i, 1, nx - 2);
      const double hm = xs[c] - xs[c - 1], hp = xs[c + 1] - xs[c];
      const double vm = s.at(k, c - 1), v0 = s.at(k, c), vp = s.at(k, c + 1);
      const double d2 = 2.0 * (vm / (hm * (hm + hp)) - v0 / (hm * hp) + vp / (hp * (hm + hp)));
      double d1;
      if (i == 0)
        d1 = (s.at(k, 1) - s.at(k, 0)) / (xs[1] - xs[0]);
      else if (i + 1 == nx)
        d1 = (s.at(k, nx - 1) - s.at(k, nx - 2)) / (xs[nx - 1] - xs[nx - 2]);
      else
        d1 = (-hp / (hm * (hm + hp))) * vm + ((hp - hm) / (hm * hp)) * v0 + (hm / (hp * (hm + hp))) * vp;
      s.dv_dx[s.index(k, i)] = d1;
      s.d2v_dx2[s.index(k, i)] = d2;
    }
  }
  s.residual.assign(s.v.size(), 0.0);
  for (std::size_t k = 0; k + 1 < nl; ++k)
    for (std::size_t i = 1; i + 1 < nx; ++i) {
      const std::size_t id = s.index(k, i);
      const double pde = s.rate[i] * s.v[id] - s.dv_dt[id] - 0.5 * s.sigma[i] * s.sigma[i] * s.d2v_dx2[id] - s.profit[i];
      s.residual[id] = std::min(pde, s.v[id] - s.g[i]);
    }
}

/// Theta-scheme with Rannacher startup and projection onto {w >= g}; Dirichlet v = g at the
/// window edges. The optional running profit enters as a source term.
inline ValueSurface solve(const NaturalScaleDiffusion& diff, const ConvexDiffGain& gain, const RealFn& rate,
                          const SpaceTimeGrid& grid, const SchemeParams& scheme,
                          const std::optional<RealFn>& profit = std::nullopt) {
  const auto& xs = grid.x;
  const std::size_t nx = grid.nx(), nl = grid.levels();
  if (!(diff.interval.lo < xs.front() && xs.back() < diff.interval.hi))
    throw DomainError("grid truncation must lie strictly inside the state interval");
  if (scheme.theta < 0.0 || scheme.theta > 1.0) throw DomainError("theta must lie in [0, 1]");
  if (!(scheme.psor.omega > 0.0 && scheme.psor.omega < 2.0)) throw DomainError("PSOR omega must lie in (0, 2)");

  ValueSurface s;
  s.grid = grid;
  s.g.resize(nx);
  s.sigma.resize(nx);
  s.rate.resize(nx);
  s.profit.assign(nx, 0.0);
  double gmax = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    s.g[i] = gain(xs[i]);
    s.sigma[i] = diff.sigma(xs[i]);
    s.rate[i] = rate(xs[i]);
    if (profit) s.profit[i] = (*profit)(xs[i]);
    if (!(s.sigma[i] > 0.0)) throw DomainError("volatility must be positive on the grid");
    if (!(s.rate[i] >= 0.0)) throw DomainError("discount rate must be nonnegative on the grid");
    gmax = std::max(gmax, std::abs(s.g[i]));
  }
  s.v.assign(nx * nl, 0.0);
  for (std::size_t i = 0; i < nx; ++i) s.v[s.index(nl - 1, i)] = s.g[i];

  const std::size_t m = nx - 2;
  std::vector<double> lo_c(m), up_c(m), mid_c(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t i = j + 1;
    const double hm = xs[i] - xs[i - 1], hp = xs[i + 1] - xs[i];
    const double half_var = 0.5 * s.sigma[i] * s.sigma[i];
    lo_c[j] = half_var * 2.0 / (hm * (hm + hp));
    up_c[j] = half_var * 2.0 / (hp * (hm + hp));
    mid_c[j] = -(lo_c[j] + up_c[j]) - s.rate[i];
  }
  if (scheme.theta < 0.5) {
    const double dtau = grid.dt();
    double lam = 0.0;
    for (std::size_t j = 0; j < m; ++j) lam = std::max(lam, -mid_c[j] + lo_c[j] + up_c[j]);
    if ((1.0 - 2.0 * scheme.theta) * dtau * lam > 2.0)
      s.stats.warnings.push_back("explicit stability bound violated for theta < 1/2");
  }

  std::vector<double> psi(m), w(m), old(m), trial(m);
  for (std::size_t j = 0; j < m; ++j) {
    psi[j] = s.g[j + 1];
    w[j] = psi[j];
  }
  detail::Tridiag sys(m);
  const double lcp_tol = 1e-12 * std::max(1.0, gmax);
  for (std::size_t step = 1; step < nl; ++step) {
    const std::size_t k = nl - 1 - step;
    const double dtau = grid.t[k + 1] - grid.t[k];
    const double th = step <= scheme.rannacher_steps ? 1.0 : scheme.theta;
    old = w;
    const double left_edge = s.g.front(), right_edge = s.g.back();
    for (std::size_t j = 0; j < m; ++j) {
      const double wl = j == 0 ? left_edge : old[j - 1];
      const double wr = j + 1 == m ? right_edge : old[j + 1];
      const double lw = lo_c[j] * wl + mid_c[j] * old[j] + up_c[j] * wr;
      sys.lower[j] = -th * dtau * lo_c[j];
      sys.diag[j] = 1.0 - th * dtau * mid_c[j];
      sys.upper[j] = -th * dtau * up_c[j];
      sys.rhs[j] = old[j] + (1.0 - th) * dtau * lw + dtau * s.profit[j + 1];
    }
    sys.rhs[0] -= sys.lower[0] * left_edge;
    sys.rhs[m - 1] -= sys.upper[m - 1] * right_edge;

    bool solved = false;
    if (scheme.brennan_schwartz) {
      for (auto side : {detail::ExerciseSide::left, detail::ExerciseSide::right}) {
        detail::brennan_schwartz(sys, psi, side, trial);
        if (detail::is_lcp_solution(sys, psi, trial, lcp_tol)) {
          w = trial;
          solved = true;
          ++s.stats.direct_levels;
          break;
        }
      }
    }
    if (!solved) {
      const std::size_t iters = detail::psor(sys, psi, scheme.psor, w);
      if (iters > scheme.psor.max_iter)
        throw SolverError("PSOR did not converge at time level " + std::to_string(k), k,
                          detail::lcp_residual(sys, psi, w));
      ++s.stats.psor_levels;
      s.stats.max_psor_iterations = std::max(s.stats.max_psor_iterations, iters);
    }
    s.v[s.index(k, 0)] = left_edge;
    s.v[s.index(k, nx - 1)] = right_edge;
    for (std::size_t j = 0; j < m; ++j) s.v[s.index(k, j + 1)] = w[j];
  }

  s.tol_b = std::max(1e-9, 10.0 * scheme.psor.tol * std::max(1.0, gmax));
  s.mask.assign(s.v.size(), 0);
  for (std::size_t k = 0; k < nl; ++k)
    for (std::size_t i = 0; i < nx; ++i) s.mask[s.index(k, i)] = (s.v[s.index(k, i)] - s.g[i] <= s.tol_b) ? 1 : 0;
  derivative_fields(s);
  return s;
}

/// Largest |PDE residual| / (dx + dt) over continuation nodes with T - t >= skip.
inline double consistency_constant(const ValueSurface& s, double skip = 0.0) {
  const double scale = s.grid.max_dx() + s.grid.dt();
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < s.levels(); ++k) {
    if (s.grid.horizon() - s.grid.t[k] < skip) continue;
    for (std::size_t i = 1; i + 1 < s.nx(); ++i) {
      const std::size_t id = s.index(k, i);
      if (s.mask[id]) continue;
      const double pde = s.rate[i] * s.v[id] - s.dv_dt[id] - 0.5 * s.sigma[i] * s.sigma[i] * s.d2v_dx2[id] - s.profit[i];
      worst = std::max(worst, std::abs(pde));
    }
  }
  return worst / scale;
}

/// Largest |complementarity residual| over interior nodes with T - t >= skip.
inline double max_residual(const ValueSurface& s, double skip = 0.0) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < s.levels(); ++k) {
    if (s.grid.horizon() - s.grid.t[k] < skip) continue;
    for (std::size_t i = 1; i + 1 < s.nx(); ++i) worst = std::max(worst, std::abs(s.residual[s.index(k, i)]));
  }
  return worst;
}

/// A problem instance that can be solved on grids of any resolution.
struct ObstacleProblem {
  NaturalScaleDiffusion diffusion;
  ConvexDiffGain gain;
  RealFn rate;
  std::optional<RealFn> profit{};
  double horizon = 1.0;
  double x_min = 0.0;
  double x_max = 1.0;
  double grading = 0.0;
  SchemeParams scheme{};

  std::vector<double> atoms_in_window() const {
    std::vector<double> a;
    for (const Atom& at : gain.atoms())
      if (at.location > x_min && at.location < x_max) a.push_back(at.location);
    return a;
  }
  SpaceTimeGrid grid(std::size_t nx, std::size_t nt) const {
    return make_grid(x_min, x_max, nx, horizon, nt, atoms_in_window(), grading);
  }
  ValueSurface solve(std::size_t nx, std::size_t nt) const {
    return freebound::solve(diffusion, gain, rate, grid(nx, nt), scheme, profit);
  }
};

struct Probe {
  double t;
  double x;
};

struct RefinementReport {
  std::vector<std::size_t> nx, nt;
  std::vector<std::vector<double>> values;  ///< [probe][level]
  std::vector<std::vector<double>> errors;  ///< [probe][level], against the reference
  std::vector<std::vector<double>> orders;  ///< [probe][level-1]
  bool exact = false;
  bool reference_is_exact = false;
  std::vector<std::string> warnings;
  std::vector<ValueSurface> surfaces;
};

/// Solves on `levels` grids, each halving dx and dt, and reports observed orders at the
/// probes against `exact` when given, otherwise against the finest level.
inline RefinementReport richardson_refine(const ObstacleProblem& problem, std::size_t nx0, std::size_t nt0,
                                          std::size_t levels, const std::vector<Probe>& probes,
                                          const std::function<double(double, double)>& exact = nullptr,
                                          bool keep_surfaces = false) {
  if (levels < 2) throw DomainError("refinement needs at least two levels");
  RefinementReport rep;
  rep.values.assign(probes.size(), {});
  std::size_t nx = nx0, nt = nt0;
  for (std::size_t l = 0; l < levels; ++l) {
    ValueSurface s = problem.solve(nx, nt);
    rep.nx.push_back(nx);
    rep.nt.push_back(nt);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const std::size_t k = s.grid.nearest_level(probes[p].t);
      rep.values[p].push_back(s.value_cubic(k, probes[p].x));
    }
    if (keep_surfaces) rep.surfaces.push_back(std::move(s));
    nx = 2 * nx - 1;
    nt = 2 * nt;
  }
  rep.reference_is_exact = static_cast<bool>(exact);
  rep.errors.assign(probes.size(), {});
  rep.orders.assign(probes.size(), {});
  bool all_exact = true;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const double ref = exact ? exact(probes[p].t, probes[p].x) : rep.values[p].back();
    const std::size_t used = exact ? levels : levels - 1;
    for (std::size_t l = 0; l < used; ++l) {
      const double e = std::abs(rep.values[p][l] - ref);
      rep.errors[p].push_back(e);
      if (e > 1e-12) all_exact = false;
    }
    for (std::size_t l = 1; l < used; ++l) {
      const double e0 = rep.errors[p][l - 1], e1 = rep.errors[p][l];
      rep.orders[p].push_back(e0 > 0.0 && e1 > 0.0 ? std::log2(e0 / e1) : kInf);
      if (e1 > e0 && e0 > 1e-12)
        rep.warnings.push_back("non-monotone error sequence at probe " + std::to_string(p));
    }
  }
  rep.exact = all_exact;
  return rep;
}

}  // namespace freebound
