#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "freebound/diffusion.hpp"
#include "freebound/errors.hpp"
#include "freebound/fdsolver.hpp"
#include "freebound/numerics.hpp"
#include "freebound/parallel.hpp"
#include "freebound/payoff.hpp"
#include "freebound/rng.hpp"

namespace freebound {

enum class LocalTimeMethod { occupation, tanaka };

inline const char* method_name(LocalTimeMethod m) { return m == LocalTimeMethod::occupation ? "OCCUPATION" : "TANAKA"; }

struct FixedTime {
  double horizon;
};

/// First exit from an open interval, capped at `horizon`.
struct ExitInterval {
  Interval interval;
  double horizon;
};

/// First entry into the surface's exercise region starting from time t0, capped at `horizon`.
struct MaskEntry {
  const ValueSurface* surface;
  double t0;
  double horizon;
};

using StoppingRule = std::variant<FixedTime, ExitInterval, MaskEntry>;

inline double rule_horizon(const StoppingRule& rule) {
  return std::visit([](const auto& r) { return r.horizon; }, rule);
}

struct McOptions {
  double dt = 1e-3;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double eps0 = 0.5;
  std::optional<Interval> guard;  ///< defaults to the diffusion's interval
};

struct LocalTimeEstimate {
  double value = 0.0;
  double std_error = 0.0;
  LocalTimeMethod method = LocalTimeMethod::tanaka;
  std::size_t n_paths = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::size_t absorbed = 0;
};

/// Sample mean and standard error, summed in index order.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs, std::size_t stride = 1, std::size_t offset = 0) {
  const std::size_t n = xs.size() / stride;
  if (n == 0) return {};
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += xs[i * stride + offset];
  const double m = s / static_cast<double>(n);
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = xs[i * stride + offset] - m;
    q += d * d;
  }
  const double var = n > 1 ? q / static_cast<double>(n - 1) : 0.0;
  return {m, std::sqrt(var / static_cast<double>(n))};
}

/// State handed to path observers at each Euler step from (t, x) to x_next.
struct StepState {
  double t;
  double x;
  double x_next;
  double sigma;
  double discount;  ///< exp(-int_0^t r)
  double dt;
  double noise;     ///< sigma * sqrt(dt) * Z before any guard clamping
};

struct StopState {
  double t;
  double x;
  double discount;
  bool absorbed;
};

/// Simulates one Euler path under `rule`, reporting each step and the stopping state to obs.
template <class Observer>
void simulate_path(const NaturalScaleDiffusion& d, double x0, const RealFn& rate, const StoppingRule& rule,
                   const McOptions& o, std::size_t path, Observer& obs) {
  const double horizon = rule_horizon(rule);
  const std::size_t n = horizon > 0.0 ? step_count(horizon, o.dt) : 0;
  const double dt = n ? horizon / static_cast<double>(n) : 0.0;
  const double sqdt = std::sqrt(dt);
  const Interval guard = o.guard.value_or(d.interval);
  CounterRng rng(o.seed, path);
  double x = x0;
  double disc = 1.0;
  double cached_rate = kNaN, cached_factor = 1.0;
  bool absorbed = false;
  for (std::size_t k = 0;; ++k) {
    const double t = dt * static_cast<double>(k);
    bool stop = k == n || absorbed;
    if (!stop) {
      if (const auto* e = std::get_if<ExitInterval>(&rule)) {
        stop = !e->interval.contains(x);
      } else if (const auto* m = std::get_if<MaskEntry>(&rule)) {
        stop = m->surface->excess_at(m->t0 + t, x) <= m->surface->tol_b;
      }
    }
    if (stop) {
      obs.stop(StopState{t, x, disc, absorbed});
      return;
    }
    const double sig = d.sigma(x);
    const double noise = sig * sqdt * rng.normal();
    double xn = x + noise;
    if (xn <= guard.lo || xn >= guard.hi) {
      xn = std::clamp(xn, guard.lo, guard.hi);
      absorbed = true;
    }
    obs.step(StepState{t, x, xn, sig, disc, dt, noise});
    const double r = rate(x);
    if (r != cached_rate) {
      cached_rate = r;
      cached_factor = std::exp(-r * dt);
    }
    disc *= cached_factor;
    x = xn;
  }
}

namespace detail {

/// Discounted local time at several levels along one path.
struct LocalTimeObserver {
  const std::vector<double>* levels;
  LocalTimeMethod method;
  double eps;
  double* out;  ///< one slot per level

  void step(const StepState& s) {
    const double h = s.sigma * s.sigma * s.dt;
    for (std::size_t j = 0; j < levels->size(); ++j) {
      const double z = (*levels)[j];
      if (method == LocalTimeMethod::tanaka) {
        const double a = std::abs(s.x - z) + std::abs(s.x_next - z);
        if (a * a > 98.0 * h) continue;
        out[j] += s.discount * bridge_local_time(s.x, s.x_next, z, h);
      } else if (std::abs(s.x - z) < eps) {
        out[j] += s.discount * h / (2.0 * eps);
      }
    }
  }
  void stop(const StopState&) {}
};

}  // namespace detail

/// E[l^z_tau] at each level z by Monte Carlo. Levels outside the guard, or outside the exit
/// interval of an exit rule, are exactly zero.
inline std::vector<LocalTimeEstimate> estimate_local_times(const NaturalScaleDiffusion& d, double x0,
                                                           const std::vector<double>& levels, const RealFn& rate,
                                                           const StoppingRule& rule, const McOptions& o,
                                                           LocalTimeMethod method) {
  const Interval guard = o.guard.value_or(d.interval);
  std::vector<double> live;
  std::vector<std::size_t> live_idx;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    bool reachable = guard.contains(levels[j]);
    if (const auto* e = std::get_if<ExitInterval>(&rule)) reachable = reachable && e->interval.contains(levels[j]);
    if (reachable) {
      live.push_back(levels[j]);
      live_idx.push_back(j);
    }
  }
  std::vector<LocalTimeEstimate> out(levels.size());
  for (auto& e : out) {
    e.method = method;
    e.n_paths = o.n_paths;
    e.dt = o.dt;
    e.seed = o.seed;
  }
  if (live.empty()) return out;
  const double eps = o.eps0 * std::sqrt(o.dt);
  const std::size_t m = live.size();
  std::vector<double> acc(o.n_paths * m, 0.0);
  std::vector<std::uint8_t> absorbed(o.n_paths, 0);
  parallel_for(o.n_paths, o.workers, [&](std::size_t p) {
    detail::LocalTimeObserver obs{&live, method, eps, &acc[p * m]};
    struct Wrap {
      detail::LocalTimeObserver& inner;
      std::uint8_t& flag;
      void step(const StepState& s) { inner.step(s); }
      void stop(const StopState& s) { flag = s.absorbed ? 1 : 0; }
    } w{obs, absorbed[p]};
    simulate_path(d, x0, rate, rule, o, p, w);
  });
  const auto n_abs = static_cast<std::size_t>(std::count(absorbed.begin(), absorbed.end(), std::uint8_t{1}));
  for (std::size_t j = 0; j < m; ++j) {
    const MeanSe ms = mean_se(acc, m, j);
    if (!std::isfinite(ms.mean)) throw SimulationError("non-finite local time estimate");
    auto& e = out[live_idx[j]];
    e.value = ms.mean;
    e.std_error = ms.se;
    e.absorbed = n_abs;
  }
  return out;
}

inline LocalTimeEstimate estimate_local_time(const NaturalScaleDiffusion& d, double x0, double z, const RealFn& rate,
                                             const StoppingRule& rule, const McOptions& o, LocalTimeMethod method) {
  return estimate_local_times(d, x0, {z}, rate, rule, o, method).front();
}

struct LagrangeResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;        ///< paired per-path estimate of lhs - rhs, stochastic integral removed
  double std_error = 0.0;  ///< of the paired per-path difference
  double martingale = 0.0; ///< mean of the removed discrete stochastic integral (zero in expectation)
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  std::size_t n_paths = 0;
  std::size_t absorbed = 0;
};

/// Both sides of  E[e^{-R_tau} g(X_tau) + int e^{-R} h] - g(x0) = E[1/2 int l^z_tau nu(dz)]  on one
/// path set. The density part of the right side uses the occupation-time formula
/// int f(z) l^z dz = int e^{-R} f(X) sigma^2(X) ds; atoms use bridge-corrected local times.
/// The per-path difference also subtracts sum e^{-R_k} g'(X_k) sigma(X_k) dW_k, which has mean
/// zero for every stopping rule, so the gap keeps its expectation and loses most of its variance.
inline LagrangeResult verify_lagrange(const NaturalScaleDiffusion& d, const ConvexDiffGain& g, const RealFn& rate,
                                      const std::optional<RealFn>& profit, double x0, const StoppingRule& rule,
                                      const McOptions& o) {
  const std::vector<Atom>& atoms = g.atoms();
  const double g0 = g(x0);
  std::vector<double> lhs(o.n_paths), rhs(o.n_paths), mart(o.n_paths);
  std::vector<std::uint8_t> absorbed(o.n_paths, 0);
  parallel_for(o.n_paths, o.workers, [&](std::size_t p) {
    struct Obs {
      const ConvexDiffGain& g;
      const RealFn& rate;
      const std::optional<RealFn>& profit;
      const std::vector<Atom>& atoms;
      double atom_part = 0.0, density_part = 0.0, running = 0.0, martingale = 0.0;
      double end_value = 0.0;
      bool absorbed = false;
      void step(const StepState& s) {
        const double var = s.sigma * s.sigma;
        const double h = var * s.dt;
        double w = g.second_density(s.x) * var - 2.0 * rate(s.x) * g(s.x);
        if (profit) {
          const double hp = (*profit)(s.x);
          w += 2.0 * hp;
          running += s.discount * hp * s.dt;
        }
        density_part += s.discount * w * s.dt;
        martingale += s.discount * g.left_deriv(s.x) * s.noise;
        for (const Atom& a : atoms) {
          const double q = std::abs(s.x - a.location) + std::abs(s.x_next - a.location);
          if (q * q > 98.0 * h) continue;
          atom_part += s.discount * a.mass * bridge_local_time(s.x, s.x_next, a.location, h);
        }
      }
      void stop(const StopState& s) {
        end_value = s.discount * g(s.x);
        absorbed = s.absorbed;
      }
    } obs{g, rate, profit, atoms};
    simulate_path(d, x0, rate, rule, o, p, obs);
    lhs[p] = obs.end_value + obs.running - g0;
    rhs[p] = 0.5 * (obs.atom_part + obs.density_part);
    mart[p] = obs.martingale;
    absorbed[p] = obs.absorbed ? 1 : 0;
    if (!std::isfinite(lhs[p]) || !std::isfinite(rhs[p]))
      throw SimulationError("non-finite Lagrange integrand on path " + std::to_string(p));
  });
  LagrangeResult res;
  res.n_paths = o.n_paths;
  res.absorbed = static_cast<std::size_t>(std::count(absorbed.begin(), absorbed.end(), std::uint8_t{1}));
  std::vector<double> diff(o.n_paths);
  for (std::size_t p = 0; p < o.n_paths; ++p) diff[p] = lhs[p] - mart[p] - rhs[p];
  const MeanSe l = mean_se(lhs), r = mean_se(rhs), g_ = mean_se(diff);
  res.martingale = mean_se(mart).mean;
  res.lhs = l.mean;
  res.rhs = r.mean;
  res.lhs_se = l.se;
  res.rhs_se = r.se;
  res.gap = g_.mean;
  res.std_error = g_.se;
  return res;
}

struct PositivityRow {
  double z;
  double value;
  double std_error;
};

/// E[l^z_{tau_eps}] on a uniform z-grid of `n_levels` points across [window.lo, window.hi], with
/// tau_eps the first exit from the window capped at `horizon`. Edge levels come out exactly 0.
inline std::vector<PositivityRow> verify_positivity(const NaturalScaleDiffusion& d, double x0, Interval window,
                                                    double horizon, std::size_t n_levels, const RealFn& rate,
                                                    const McOptions& o) {
  if (!window.bounded() || !window.contains(x0)) throw DomainError("positivity window must be compact around x0");
  std::vector<double> zs(n_levels);
  for (std::size_t j = 0; j < n_levels; ++j)
    zs[j] = window.lo + window.length() * static_cast<double>(j) / static_cast<double>(n_levels - 1);
  const auto est = estimate_local_times(d, x0, zs, rate, ExitInterval{window, horizon}, o, LocalTimeMethod::tanaka);
  std::vector<PositivityRow> out;
  for (std::size_t j = 0; j < n_levels; ++j) out.push_back({zs[j], est[j].value, est[j].std_error});
  return out;
}

/// int_{t1}^{t2} 2 p_hat(s, x, z) ds for a registered density.
inline double local_time_density_bound(const NaturalScaleDiffusion& d, double x, double z, double t1, double t2,
                                       double tol = 1e-10) {
  if (!(t2 > t1)) return 0.0;
  auto f = [&](double s) { return s <= 0.0 ? 0.0 : 2.0 * speed_density(d, s, x, z); };
  return integrate(f, t1, t2, tol, 1e-15, "local time density bound").value;
}

struct LipschitzResult {
  double observed = 0.0;
  double bound = 0.0;
  double quad_tol = 0.0;
  bool pass = false;
};

/// 0 <= v(t1,x) - v(t2,x) <= int_{T-t2}^{T-t1} int 2 p_hat(s,x,z) mu^+(dz) ds, with v read off the
/// surface at the nearest time levels and the positive part of mu integrated over mu.domain.
inline LipschitzResult verify_time_lipschitz(const NaturalScaleDiffusion& d, const SignedMeasure& mu,
                                             const ValueSurface& s, double x, double t1, double t2,
                                             double quad_tol = 1e-6, double grid_tol = 1e-10) {
  if (!d.has_density()) throw UnsupportedFamily("time-Lipschitz bound needs a registered transition density");
  const double horizon = s.grid.horizon();
  if (!(t1 <= t2 && t2 < horizon)) throw DomainError("time-Lipschitz check needs t1 <= t2 < T");
  LipschitzResult res;
  res.quad_tol = quad_tol;
  const std::size_t k1 = s.grid.nearest_level(t1), k2 = s.grid.nearest_level(t2);
  res.observed = s.value_cubic(k1, x) - s.value_cubic(k2, x);
  if (k1 == k2) {
    res.pass = std::abs(res.observed) <= grid_tol;
    return res;
  }
  const double s1 = horizon - s.grid.t[k2], s2 = horizon - s.grid.t[k1];
  std::vector<double> cuts{mu.domain.lo};
  for (const Atom& a : mu.atoms)
    if (a.location > mu.domain.lo && a.location < mu.domain.hi) cuts.push_back(a.location);
  cuts.push_back(mu.domain.hi);
  std::sort(cuts.begin(), cuts.end());
  auto inner = [&](double sv) {
    double total = 0.0;
    for (const Atom& a : mu.atoms)
      if (a.mass > 0.0) total += 2.0 * speed_density(d, sv, x, a.location) * a.mass;
    auto f = [&](double z) { return 2.0 * speed_density(d, sv, x, z) * std::max(0.0, mu.density(z)); };
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c)
      total += integrate(f, cuts[c], cuts[c + 1], 1e-10, 1e-14, "time-Lipschitz inner").value;
    return total;
  };
  res.bound = integrate(inner, s1, s2, quad_tol * 1e-2, 1e-14, "time-Lipschitz outer").value;
  res.pass = res.observed >= -grid_tol && res.observed <= res.bound + quad_tol;
  return res;
}

struct MartingaleResult {
  double value = 0.0;  ///< v(t, x) from the surface
  double mc = 0.0;     ///< E[e^{-R} v(t + tau, X_tau) + int e^{-R} h]
  double std_error = 0.0;
  double interp_error = 0.0;
};

/// Monte Carlo check of the (super)martingale property of the discounted value process over
/// [t, t + horizon]; with stop_at_boundary paths stop on entering the exercise region.
inline MartingaleResult verify_martingale(const NaturalScaleDiffusion& d, const ValueSurface& s, const RealFn& rate,
                                          const std::optional<RealFn>& profit, double t, double x, double horizon,
                                          bool stop_at_boundary, const McOptions& o) {
  MartingaleResult res;
  res.value = s.value(t, x);
  std::vector<double> out(o.n_paths);
  const StoppingRule rule = stop_at_boundary ? StoppingRule{MaskEntry{&s, t, horizon}} : StoppingRule{FixedTime{horizon}};
  parallel_for(o.n_paths, o.workers, [&](std::size_t p) {
    struct Obs {
      const ValueSurface& s;
      const std::optional<RealFn>& profit;
      double t0;
      double running = 0.0, end = 0.0;
      void step(const StepState& st) {
        if (profit) running += st.discount * (*profit)(st.x) * st.dt;
      }
      void stop(const StopState& st) { end = st.discount * s.value(t0 + st.t, st.x); }
    } obs{s, profit, t};
    simulate_path(d, x, rate, rule, o, p, obs);
    out[p] = obs.end + obs.running;
  });
  const MeanSe ms = mean_se(out);
  res.mc = ms.mean;
  res.std_error = ms.se;
  const std::size_t k0 = s.grid.nearest_level(t);
  const std::size_t k1 = std::min(s.levels() - 1, s.grid.nearest_level(t + horizon) + 1);
  double vxx = 0.0, vtt = 0.0;
  for (std::size_t k = k0; k <= k1; ++k)
    for (std::size_t i = 1; i + 1 < s.nx(); ++i) {
      vxx = std::max(vxx, std::abs(s.d2v_dx2[s.index(k, i)]));
      if (k > 0 && k + 1 < s.levels())
        vtt = std::max(vtt, std::abs(s.at(k + 1, i) - 2.0 * s.at(k, i) + s.at(k - 1, i)));
    }
  const double dx = s.grid.max_dx();
  res.interp_error = vxx * dx * dx / 8.0 + vtt / 8.0;
  return res;
}

}  // namespace freebound
