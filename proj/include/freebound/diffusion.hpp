#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freebound/errors.hpp"
#include "freebound/numerics.hpp"
#include "freebound/parallel.hpp"
#include "freebound/rng.hpp"

namespace freebound {

enum class DiffusionFamily { brownian, geometric_brownian, custom };

/// Drifted SDE dY = alpha(Y) dt + beta(Y) dB on an open interval.
struct DiffusionSpec {
  std::optional<RealFn> drift_alpha;  ///< nullopt means already driftless
  RealFn vol_beta;
  Interval interval;
  DiffusionFamily family = DiffusionFamily::custom;
  double drift_rate = 0.0;  ///< gbm drift parameter
  double vol = 1.0;         ///< bm / gbm volatility parameter
  std::optional<Interval> window;   ///< compact window for quadrature-based scale maps
  std::optional<double> anchor;     ///< scale map vanishes here; default window midpoint
  std::vector<double> breakpoints;  ///< kinks of tabulated coefficients

  static DiffusionSpec brownian(double sigma = 1.0) {
    DiffusionSpec s;
    s.vol_beta = [sigma](double) { return sigma; };
    s.family = DiffusionFamily::brownian;
    s.vol = sigma;
    return s;
  }

  static DiffusionSpec geometric_brownian(double drift, double sigma) {
    DiffusionSpec s;
    s.drift_alpha = [drift](double y) { return drift * y; };
    s.vol_beta = [sigma](double y) { return sigma * y; };
    s.interval = {0.0, kInf};
    s.family = DiffusionFamily::geometric_brownian;
    s.drift_rate = drift;
    s.vol = sigma;
    return s;
  }

  static DiffusionSpec custom(std::optional<RealFn> alpha, RealFn beta, Interval interval,
                              std::optional<Interval> window = std::nullopt) {
    DiffusionSpec s;
    s.drift_alpha = std::move(alpha);
    s.vol_beta = std::move(beta);
    s.interval = interval;
    s.window = window;
    return s;
  }

  /// Piecewise-linear alpha and beta through the given table; the table range is the window.
  static DiffusionSpec tabulated(std::vector<double> y, std::vector<double> alpha, std::vector<double> beta) {
    if (y.size() < 2 || alpha.size() != y.size() || beta.size() != y.size())
      throw DomainError("tabulated diffusion needs matching y/alpha/beta arrays of length >= 2");
    for (std::size_t i = 1; i < y.size(); ++i)
      if (!(y[i] > y[i - 1])) throw DomainError("tabulated diffusion nodes must be strictly increasing");
    DiffusionSpec s;
    s.window = Interval{y.front(), y.back()};
    s.interval = *s.window;
    s.breakpoints = y;
    s.drift_alpha = [y, alpha](double u) { return interp_linear(y, alpha, u); };
    s.vol_beta = [y, beta](double u) { return interp_linear(y, beta, u); };
    return s;
  }
};

/// Monotone change of variables Y -> X = S(Y) and its inverse.
struct ScaleMap {
  RealFn forward;
  RealFn inverse;
  RealFn derivative;
  bool identity = true;
};

enum class DensityKind { none, brownian, lognormal };

/// Closed-form transition law of the natural-scale process, when one is known.
/// lognormal: |X| is a driftless geometric Brownian motion with volatility `vol`
/// and X keeps the sign `sign`.
struct RegisteredDensity {
  DensityKind kind = DensityKind::none;
  double vol = 0.0;
  double sign = 1.0;
};

/// Driftless diffusion dX = sigma(X) dB on an open interval.
struct NaturalScaleDiffusion {
  RealFn sigma;
  Interval interval;
  ScaleMap scale;
  RegisteredDensity density;
  std::string family_name;

  bool has_density() const noexcept { return density.kind != DensityKind::none; }
};

namespace detail {

/// Scale map by adaptive quadrature of S'(y) = exp(-int_anchor^y 2 alpha / beta^2).
/// Cumulative integrals are tabulated on a node set containing all breakpoints; point
/// evaluations integrate from the nearest node below, so S is exact to quadrature accuracy.
class QuadratureScale {
 public:
  QuadratureScale(RealFn alpha, RealFn beta, Interval window, double anchor, const std::vector<double>& breaks,
                  std::size_t cells, double tol)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), window_(window), tol_(tol) {
    if (!window.bounded() || !(window.hi > window.lo))
      throw DomainError("quadrature scale map needs a bounded compact window");
    if (!(anchor >= window.lo && anchor <= window.hi)) throw DomainError("scale anchor lies outside the window");
    build_nodes(breaks, cells);
    check_coefficients();

    const std::size_t n = nodes_.size();
    std::vector<double> cum_q(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) cum_q[j] = cum_q[j - 1] + integral_q(nodes_[j - 1], nodes_[j]);
    const std::size_t ja = bracket_index(nodes_, anchor);
    const double q_anchor = cum_q[ja] + integral_q(nodes_[ja], anchor);
    log_d_.resize(n);
    for (std::size_t j = 0; j < n; ++j) log_d_[j] = -(cum_q[j] - q_anchor);

    std::vector<double> cum_s(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) cum_s[j] = cum_s[j - 1] + integral_d(j - 1, nodes_[j]);
    const double s_anchor = cum_s[ja] + integral_d(ja, anchor);
    s_.resize(n);
    for (std::size_t j = 0; j < n; ++j) s_[j] = cum_s[j] - s_anchor;

    std::vector<double> sig(n);
    for (std::size_t j = 0; j < n; ++j) sig[j] = std::exp(log_d_[j]) * beta_(nodes_[j]);
    sigma_table_ = CubicTable(s_, sig);
  }

  double derivative(double y) const {
    check_window(y);
    const std::size_t j = bracket_index(nodes_, y);
    return std::exp(log_d_[j] - integral_q(nodes_[j], y));
  }

  double forward(double y) const {
    check_window(y);
    const std::size_t j = bracket_index(nodes_, y);
    return s_[j] + integral_d(j, y);
  }

  double inverse(double x) const {
    if (!(x >= s_.front() && x <= s_.back()))
      throw DomainError("scale inverse queried outside the image of the window");
    const std::size_t j = bracket_index(s_, x);
    if (x == s_[j]) return nodes_[j];
    if (x == s_[j + 1]) return nodes_[j + 1];
    return find_root([&](double y) { return forward(y) - x; }, nodes_[j], nodes_[j + 1], "scale inverse");
  }

  double sigma(double x) const { return sigma_table_(x); }
  Interval image() const { return {s_.front(), s_.back()}; }

 private:
  void build_nodes(const std::vector<double>& breaks, std::size_t cells) {
    std::vector<double> knots{window_.lo, window_.hi};
    for (double b : breaks)
      if (b > window_.lo && b < window_.hi) knots.push_back(b);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const double h = window_.length() / static_cast<double>(std::max<std::size_t>(cells, 1));
    nodes_.push_back(knots.front());
    for (std::size_t k = 1; k < knots.size(); ++k) {
      const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil((knots[k] - knots[k - 1]) / h)));
      for (std::size_t i = 1; i < m; ++i)
        nodes_.push_back(knots[k - 1] + (knots[k] - knots[k - 1]) * static_cast<double>(i) / static_cast<double>(m));
      nodes_.push_back(knots[k]);
    }
  }

  void check_coefficients() const {
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      const double y = nodes_[j];
      const double b = beta_(y);
      if (!(b > 0.0) || !std::isfinite(b))
        throw DomainError("volatility beta is not strictly positive at y=" + std::to_string(y));
      if (!std::isfinite(alpha_(y))) throw DomainError("drift alpha is not finite at y=" + std::to_string(y));
      if (j + 1 < nodes_.size()) {
        const double ym = 0.5 * (y + nodes_[j + 1]);
        if (!(beta_(ym) > 0.0)) throw DomainError("volatility beta is not strictly positive at y=" + std::to_string(ym));
      }
    }
  }

  void check_window(double y) const {
    if (!(y >= window_.lo && y <= window_.hi))
      throw DomainError("scale map queried outside its quadrature window at y=" + std::to_string(y));
  }

  double integral_q(double a, double b) const {
    auto q = [this](double u) {
      const double bu = beta_(u);
      return 2.0 * alpha_(u) / (bu * bu);
    };
    return integrate(q, a, b, tol_, 1e-15, "scale density exponent").value;
  }

  /// int_{nodes_[j]}^{y} S'(u) du for y within the cell above node j.
  double integral_d(std::size_t j, double y) const {
    const double base = nodes_[j];
    auto d = [this, j, base](double u) { return std::exp(log_d_[j] - integral_q(base, u)); };
    return integrate(d, base, y, tol_, 1e-15, "scale function").value;
  }

  RealFn alpha_, beta_;
  Interval window_;
  double tol_;
  std::vector<double> nodes_, log_d_, s_;
  CubicTable sigma_table_;
};

}  // namespace detail

struct ScaleOptions {
  std::size_t cells = 512;
  double tol = 1e-13;
};

/// Reduces a drifted SDE to natural scale. Registered families get closed forms; a
/// custom spec with drift uses the quadrature scale map on its compact window.
inline NaturalScaleDiffusion build_natural_scale(const DiffusionSpec& spec, const ScaleOptions& opts = {}) {
  NaturalScaleDiffusion out;
  auto identity_map = [] {
    ScaleMap m;
    m.forward = [](double y) { return y; };
    m.inverse = [](double x) { return x; };
    m.derivative = [](double) { return 1.0; };
    m.identity = true;
    return m;
  };

  switch (spec.family) {
    case DiffusionFamily::brownian: {
      if (!(spec.vol > 0.0)) throw DomainError("Brownian volatility must be positive");
      const double s = spec.vol;
      out.sigma = [s](double) { return s; };
      out.interval = {-kInf, kInf};
      out.scale = identity_map();
      out.density = {DensityKind::brownian, s, 1.0};
      out.family_name = "bm";
      return out;
    }
    case DiffusionFamily::geometric_brownian: {
      if (!(spec.vol > 0.0)) throw DomainError("GBM volatility must be positive");
      const double s = spec.vol;
      const double d = 2.0 * spec.drift_rate / (s * s);
      out.family_name = "gbm";
      if (std::abs(d - 1.0) < 1e-14) {
        out.sigma = [s](double) { return s; };
        out.interval = {-kInf, kInf};
        out.scale.forward = [](double y) { return std::log(y); };
        out.scale.inverse = [](double x) { return std::exp(x); };
        out.scale.derivative = [](double y) { return 1.0 / y; };
        out.scale.identity = false;
        out.density = {DensityKind::brownian, s, 1.0};
        return out;
      }
      const double e = 1.0 - d;
      out.sigma = [s, e](double x) { return e * s * x; };
      out.interval = e > 0.0 ? Interval{0.0, kInf} : Interval{-kInf, 0.0};
      if (d == 0.0) {
        out.scale = identity_map();
      } else {
        out.scale.forward = [e](double y) { return std::pow(y, e) / e; };
        out.scale.inverse = [e](double x) { return std::pow(e * x, 1.0 / e); };
        out.scale.derivative = [d](double y) { return std::pow(y, -d); };
        out.scale.identity = false;
      }
      out.density = {DensityKind::lognormal, std::abs(e) * s, e > 0.0 ? 1.0 : -1.0};
      return out;
    }
    case DiffusionFamily::custom:
      break;
  }

  if (!spec.vol_beta) throw DomainError("diffusion spec has no volatility function");
  if (!spec.drift_alpha) {
    const RealFn beta = spec.vol_beta;
    if (spec.window) {
      for (int i = 0; i <= 64; ++i) {
        const double y = spec.window->lo + spec.window->length() * i / 64.0;
        if (!(beta(y) > 0.0)) throw DomainError("volatility is not strictly positive at x=" + std::to_string(y));
      }
    }
    out.sigma = beta;
    out.interval = spec.interval;
    out.scale = identity_map();
    out.family_name = "custom";
    return out;
  }

  if (!spec.window) throw DomainError("custom drifted diffusion needs a compact quadrature window");
  const Interval w = *spec.window;
  if (!(w.lo >= spec.interval.lo && w.hi <= spec.interval.hi))
    throw DomainError("quadrature window must lie inside the state interval");
  auto qs = std::make_shared<const detail::QuadratureScale>(*spec.drift_alpha, spec.vol_beta, w,
                                                            spec.anchor.value_or(w.mid()), spec.breakpoints,
                                                            opts.cells, opts.tol);
  out.sigma = [qs](double x) { return qs->sigma(x); };
  out.interval = qs->image();
  out.scale.forward = [qs](double y) { return qs->forward(y); };
  out.scale.inverse = [qs](double x) { return qs->inverse(x); };
  out.scale.derivative = [qs](double y) { return qs->derivative(y); };
  out.scale.identity = false;
  out.family_name = "custom-quadrature";
  return out;
}

/// Lebesgue transition density p(t, x, y) of the natural-scale process.
inline double transition_density(const NaturalScaleDiffusion& d, double t, double x, double y) {
  if (!(t > 0.0)) throw DomainError("transition density needs t > 0");
  switch (d.density.kind) {
    case DensityKind::brownian: {
      const double sd = d.density.vol * std::sqrt(t);
      return normal_pdf((y - x) / sd) / sd;
    }
    case DensityKind::lognormal: {
      const double sg = d.density.sign;
      if (!(sg * x > 0.0)) throw DomainError("transition density start point outside the state interval");
      if (!(sg * y > 0.0)) return 0.0;
      const double ax = std::abs(x), ay = std::abs(y);
      const double sd = d.density.vol * std::sqrt(t);
      return normal_pdf((std::log(ay / ax) + 0.5 * sd * sd) / sd) / (ay * sd);
    }
    case DensityKind::none:
      break;
  }
  throw UnsupportedFamily("no closed-form transition density for family '" + d.family_name + "'");
}

/// Density with respect to the speed measure: p_hat = sigma(y)^2 p / 2. Symmetric in (x, y).
inline double speed_density(const NaturalScaleDiffusion& d, double t, double x, double y) {
  const double s = d.sigma(y);
  return 0.5 * s * s * transition_density(d, t, x, y);
}

struct PathOptions {
  double x0 = 0.0;
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::optional<Interval> guard;  ///< defaults to the diffusion's interval
  unsigned workers = 1;
};

/// Row-major (path, step) array of simulated states.
struct PathArray {
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  double dt = 0.0;
  std::vector<double> states;
  std::vector<std::uint8_t> absorbed;

  double at(std::size_t path, std::size_t step) const { return states[path * (n_steps + 1) + step]; }
  double terminal(std::size_t path) const { return at(path, n_steps); }
  std::size_t absorbed_count() const {
    return static_cast<std::size_t>(std::count(absorbed.begin(), absorbed.end(), std::uint8_t{1}));
  }
};

/// Number of Euler steps covering `horizon` at nominal step `dt`.
inline std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  if (horizon <= 0.0) return 0;
  return static_cast<std::size_t>(std::max(1.0, std::round(horizon / dt)));
}

/// Euler-Maruyama paths. Paths leaving the guard are frozen on the guard boundary and flagged.
inline PathArray sample_paths(const NaturalScaleDiffusion& d, const PathOptions& o) {
  const Interval guard = o.guard.value_or(d.interval);
  if (!d.interval.contains(o.x0) || !guard.contains(o.x0)) throw DomainError("x0 outside the state interval");
  PathArray out;
  out.n_paths = o.n_paths;
  out.n_steps = step_count(o.horizon, o.dt);
  out.dt = out.n_steps ? o.horizon / static_cast<double>(out.n_steps) : 0.0;
  const std::size_t stride = out.n_steps + 1;
  out.states.assign(o.n_paths * stride, o.x0);
  out.absorbed.assign(o.n_paths, 0);
  const double sqdt = std::sqrt(out.dt);
  parallel_for(o.n_paths, o.workers, [&](std::size_t p) {
    CounterRng rng(o.seed, p);
    double* row = &out.states[p * stride];
    double x = o.x0;
    bool stuck = false;
    for (std::size_t k = 1; k < stride; ++k) {
      if (!stuck) {
        x += d.sigma(x) * sqdt * rng.normal();
        if (x <= guard.lo || x >= guard.hi) {
          x = std::clamp(x, guard.lo, guard.hi);
          stuck = true;
          out.absorbed[p] = 1;
        }
      }
      row[k] = x;
    }
  });
  return out;
}

}  // namespace freebound
