#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freebound/errors.hpp"
#include "freebound/fdsolver.hpp"
#include "freebound/payoff.hpp"

namespace freebound {

enum class FeatureKind { bay, spike };

inline const char* feature_name(FeatureKind k) { return k == FeatureKind::bay ? "BAY" : "SPIKE"; }

/// Bay: continuation column over a positive atom. Spike: stopping column over a negative atom.
/// Flanks are the nearest nodes on each side whose c is resolved below T - dt (bays) or the
/// spike window bounds (spikes).
struct Feature {
  FeatureKind kind;
  std::size_t node;
  double location;
  double c_value;
  std::size_t flank_left;
  std::size_t flank_right;
  double c_flank_left;
  double c_flank_right;
  double width_left;
  double width_right;
};

enum class Direction { increasing, decreasing };

inline const char* direction_name(Direction d) { return d == Direction::increasing ? "increasing" : "decreasing"; }

/// Nodes [first, last] on which c is monotone in the stated direction.
struct MonotoneSegment {
  std::size_t first;
  std::size_t last;
  Direction direction;
  bool strict;
  std::size_t plateaus;  ///< consecutive pairs whose c differs by less than one time step
};

/// Result of the monotonicity analysis on one window of nodes.
struct MonotonicityReport {
  std::size_t first = 0, last = 0;
  std::size_t a_star = 0, b_star = 0;
  bool strict_down = true;
  bool strict_up = true;
  bool flat_at_zero = false;
  std::vector<std::size_t> down_plateaus;  ///< i with c[i] - c[i+1] < dt on [first, a*)
  std::vector<std::size_t> up_plateaus;    ///< i with c[i] - c[i-1] < dt on (b*, last]
};

/// Time-parametrised boundary on a monotone segment; NaN where no node of the segment stops yet.
struct InverseBoundary {
  std::size_t first = 0, last = 0;
  Direction direction = Direction::increasing;
  std::vector<double> b;
  bool monotone = true;
};

struct BoundaryProfile {
  std::vector<double> x;
  std::vector<double> c;
  std::vector<std::size_t> level;  ///< c as a time-level index
  double horizon = 0.0;
  double dt = 0.0;
  std::size_t repaired = 0;
  std::vector<Feature> features;
  std::vector<MonotoneSegment> segments;
  std::vector<InverseBoundary> inverses;
  std::optional<std::pair<std::size_t, std::size_t>> minimizer;

  std::size_t terminal_level() const noexcept { return static_cast<std::size_t>(std::llround(horizon / dt)); }
};

/// c(x) = earliest time level from which the mask stays true through T. Mask entries that are
/// true below a continuation node are treated as continuation and counted as repairs.
inline BoundaryProfile extract_boundary(const ValueSurface& s, double max_repair_fraction = 1e-3) {
  BoundaryProfile p;
  const std::size_t nx = s.nx(), nl = s.levels();
  p.x = s.grid.x;
  p.horizon = s.grid.horizon();
  p.dt = s.grid.dt();
  p.c.resize(nx);
  p.level.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    std::size_t k = nl - 1;
    while (k > 0 && s.stopped(k - 1, i)) --k;
    p.level[i] = k;
    p.c[i] = s.grid.t[k];
    for (std::size_t j = 0; j + 1 < k; ++j)
      if (s.stopped(j, i)) ++p.repaired;
  }
  if (static_cast<double>(p.repaired) > max_repair_fraction * static_cast<double>(nx * nl))
    throw DataQualityError("exercise mask violates the up-set property at " + std::to_string(p.repaired) + " nodes");
  return p;
}

/// Flags bays at positive atoms and spikes at negative atoms.
inline void detect_features(BoundaryProfile& p, const std::vector<Region>& regions, std::size_t spike_window = 3,
                            std::size_t max_flank = 0) {
  const std::size_t nx = p.x.size();
  const std::size_t top = p.terminal_level();
  if (max_flank == 0) max_flank = nx / 4;
  p.features.clear();
  for (std::size_t i = 0; i < nx; ++i) {
    if (regions[i] == Region::atom_pos && p.level[i] == top) {
      std::optional<std::size_t> left, right;
      for (std::size_t j = i; j-- > 0 && i - j <= max_flank;)
        if (p.level[j] + 1 < top) {
          left = j;
          break;
        }
      for (std::size_t j = i + 1; j < nx && j - i <= max_flank; ++j)
        if (p.level[j] + 1 < top) {
          right = j;
          break;
        }
      if (left && right)
        p.features.push_back({FeatureKind::bay, i, p.x[i], p.c[i], *left, *right, p.c[*left], p.c[*right],
                              p.x[i] - p.x[*left], p.x[*right] - p.x[i]});
    } else if (regions[i] == Region::atom_neg && p.level[i] < top) {
      const std::size_t lo = i >= spike_window ? i - spike_window : 0;
      const std::size_t hi = std::min(nx - 1, i + spike_window);
      bool isolated = true;
      for (std::size_t j = lo; j <= hi; ++j)
        if (j != i && p.level[j] != top) isolated = false;
      if (isolated)
        p.features.push_back({FeatureKind::spike, i, p.x[i], p.c[i], lo, hi, p.c[lo], p.c[hi], p.x[i] - p.x[lo],
                              p.x[hi] - p.x[i]});
    }
  }
}

/// Maximal runs of NEG0 nodes.
inline std::vector<std::pair<std::size_t, std::size_t>> neg0_windows(const std::vector<Region>& regions) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < regions.size()) {
    if (regions[i] != Region::neg0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < regions.size() && regions[j + 1] == Region::neg0) ++j;
    out.emplace_back(i, j);
    i = j + 1;
  }
  return out;
}

/// Drops end nodes whose c lies within one time step of T: there the grid cannot resolve
/// whether stopping happens before maturity.
inline std::optional<std::pair<std::size_t, std::size_t>> resolved_part(const BoundaryProfile& p, std::size_t first,
                                                                        std::size_t last) {
  const std::size_t top = p.terminal_level();
  while (first <= last && p.level[first] + 1 >= top) ++first;
  while (last >= first && last > 0 && p.level[last] + 1 >= top) --last;
  if (first > last || p.level[last] + 1 >= top) return std::nullopt;
  return std::make_pair(first, last);
}

/// Minimiser interval and strict monotonicity of c on [first, last].
inline MonotonicityReport check_monotonicity(const BoundaryProfile& p, const std::vector<Region>& regions,
                                             std::size_t first, std::size_t last) {
  if (last < first || last >= p.x.size()) throw PreconditionError("invalid monotonicity window");
  for (std::size_t i = first; i <= last; ++i)
    if (regions[i] != Region::neg0)
      throw PreconditionError("monotonicity window is not entirely NEG0 (node " + std::to_string(i) + " is " +
                              region_name(regions[i]) + ")");
  MonotonicityReport r;
  r.first = first;
  r.last = last;
  std::size_t lo = p.level[first];
  for (std::size_t i = first; i <= last; ++i) lo = std::min(lo, p.level[i]);
  r.a_star = first;
  while (p.level[r.a_star] != lo) ++r.a_star;
  r.b_star = last;
  while (p.level[r.b_star] != lo) --r.b_star;
  for (std::size_t i = first; i < r.a_star; ++i)
    if (p.level[i] < p.level[i + 1] + 1) r.down_plateaus.push_back(i);
  for (std::size_t i = r.b_star + 1; i <= last; ++i)
    if (p.level[i] < p.level[i - 1] + 1) r.up_plateaus.push_back(i);
  r.strict_down = r.down_plateaus.empty();
  r.strict_up = r.up_plateaus.empty();
  if (r.a_star < r.b_star) {
    r.flat_at_zero = true;
    for (std::size_t i = r.a_star; i <= r.b_star; ++i)
      if (p.level[i] != 0) r.flat_at_zero = false;
  }
  return r;
}

/// b(t) = boundary between the stopped and continuing nodes of [first, last] at each time level,
/// linearly interpolated in c. Increasing c: the stopped part is a prefix; decreasing: a suffix.
inline InverseBoundary invert_boundary(const BoundaryProfile& p, std::size_t first, std::size_t last, Direction dir) {
  for (std::size_t i = first; i < last; ++i) {
    const bool ok = dir == Direction::increasing ? p.level[i + 1] >= p.level[i] : p.level[i + 1] <= p.level[i];
    if (!ok)
      throw InversionError("c is not " + std::string(direction_name(dir)) + " between x=" + std::to_string(p.x[i]) +
                           " and x=" + std::to_string(p.x[i + 1]));
  }
  InverseBoundary inv;
  inv.first = first;
  inv.last = last;
  inv.direction = dir;
  const std::size_t top = p.terminal_level();
  inv.b.assign(top + 1, kNaN);
  for (std::size_t k = 0; k <= top; ++k) {
    const double t = p.dt * static_cast<double>(k);
    if (dir == Direction::increasing) {
      if (p.level[first] > k) continue;
      std::size_t j = first;
      while (j < last && p.level[j + 1] <= k) ++j;
      double b = p.x[j];
      if (j < last) b += (t - p.c[j]) / (p.c[j + 1] - p.c[j]) * (p.x[j + 1] - p.x[j]);
      inv.b[k] = b;
    } else {
      if (p.level[last] > k) continue;
      std::size_t j = last;
      while (j > first && p.level[j - 1] <= k) --j;
      double b = p.x[j];
      if (j > first) b -= (t - p.c[j]) / (p.c[j - 1] - p.c[j]) * (p.x[j] - p.x[j - 1]);
      inv.b[k] = b;
    }
  }
  double prev = kNaN;
  for (double b : inv.b) {
    if (std::isnan(b)) continue;
    if (!std::isnan(prev) && (dir == Direction::increasing ? b < prev : b > prev)) inv.monotone = false;
    prev = b;
  }
  if (!inv.monotone) throw InversionError("inverted boundary is not monotone");
  return inv;
}

/// Full geometry pass: features, monotone segments on NEG0 windows and their inverses.
inline std::vector<MonotonicityReport> analyze_geometry(BoundaryProfile& p, const std::vector<Region>& regions) {
  detect_features(p, regions);
  p.segments.clear();
  p.inverses.clear();
  p.minimizer.reset();
  std::vector<MonotonicityReport> reports;
  for (auto [first, last] : neg0_windows(regions)) {
    auto part = resolved_part(p, first, last);
    if (!part) continue;
    MonotonicityReport r = check_monotonicity(p, regions, part->first, part->second);
    if (!p.minimizer) p.minimizer = std::make_pair(r.a_star, r.b_star);
    if (r.a_star > r.first) {
      p.segments.push_back({r.first, r.a_star, Direction::decreasing, r.strict_down, r.down_plateaus.size()});
      p.inverses.push_back(invert_boundary(p, first, r.a_star, Direction::decreasing));
    }
    if (r.b_star < r.last) {
      p.segments.push_back({r.b_star, r.last, Direction::increasing, r.strict_up, r.up_plateaus.size()});
      p.inverses.push_back(invert_boundary(p, r.b_star, last, Direction::increasing));
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

/// One S/C transition at a time level.
struct BoundaryPoint {
  std::size_t level;
  double t;
  std::size_t stop_node;
  std::size_t cont_node;
  double dx_gap;   ///< |jump of one-sided d(v - g)/dx across the boundary|
  double dt_jump;  ///< dv_dt(continuation side) - dv_dt(stopping side)
};

struct SmoothFitReport {
  std::vector<BoundaryPoint> points;
  double max_abs_dt_inside_s = 0.0;  ///< over nodes whose 3x3 neighbourhood is stopping
  double max_dt_inside_c = -kInf;    ///< over nodes whose 3x3 neighbourhood is continuation
  std::size_t s_probes = 0;
  std::size_t c_probes = 0;
};

/// Boundary points of the window [first, last] at the given time levels, plus interior probes
/// of S and C at those levels.
inline SmoothFitReport smooth_fit_check(const ValueSurface& s, std::size_t first, std::size_t last,
                                        const std::vector<std::size_t>& levels) {
  SmoothFitReport rep;
  const auto& xs = s.grid.x;
  for (std::size_t k : levels) {
    if (k + 1 >= s.levels()) continue;
    for (std::size_t i = first; i < last; ++i) {
      const bool a = s.stopped(k, i), b = s.stopped(k, i + 1);
      if (a == b) continue;
      const std::size_t st = a ? i : i + 1;
      const std::size_t co = a ? i + 1 : i;
      const std::size_t co_out = a ? co + 1 : co - 1;
      const std::size_t st_out = a ? st - 1 : st + 1;
      if (co_out >= s.nx() || st_out >= s.nx()) continue;
      const double du_c = (s.excess(k, co_out) - s.excess(k, co)) / (xs[co_out] - xs[co]);
      const double du_s = (s.excess(k, st) - s.excess(k, st_out)) / (xs[st] - xs[st_out]);
      rep.points.push_back({k, s.grid.t[k], st, co, std::abs(du_c - du_s),
                            s.dv_dt[s.index(k, co)] - s.dv_dt[s.index(k, st)]});
    }
    if (k == 0) continue;
    for (std::size_t i = std::max<std::size_t>(first, 1); i <= last && i + 1 < s.nx(); ++i) {
      bool all_s = true, all_c = true;
      for (std::size_t kk = k - 1; kk <= k + 1; ++kk)
        for (std::size_t ii = i - 1; ii <= i + 1; ++ii) {
          if (s.stopped(kk, ii)) all_c = false;
          else all_s = false;
        }
      const double d = s.dv_dt[s.index(k, i)];
      if (all_s) {
        rep.max_abs_dt_inside_s = std::max(rep.max_abs_dt_inside_s, std::abs(d));
        ++rep.s_probes;
      }
      if (all_c) {
        rep.max_dt_inside_c = std::max(rep.max_dt_inside_c, d);
        ++rep.c_probes;
      }
    }
  }
  return rep;
}

/// Nodes (t, x_m) in continuation although [max(c(x_i), c(x_j)), T] x [x_i, x_j] should be
/// stopping for some i < m < j in the window.
inline std::size_t connectedness_violations(const BoundaryProfile& p, std::size_t first, std::size_t last) {
  std::size_t count = 0;
  if (last < first + 2) return 0;
  std::vector<std::size_t> left_min(last - first + 1), right_min(last - first + 1);
  left_min[0] = p.level[first];
  for (std::size_t i = first + 1; i <= last; ++i) left_min[i - first] = std::min(left_min[i - first - 1], p.level[i]);
  right_min[last - first] = p.level[last];
  for (std::size_t i = last; i-- > first;) right_min[i - first] = std::min(right_min[i + 1 - first], p.level[i]);
  for (std::size_t m = first + 1; m < last; ++m) {
    const std::size_t bound = std::max(left_min[m - 1 - first], right_min[m + 1 - first]);
    if (p.level[m] > bound) count += p.level[m] - bound;
  }
  return count;
}

/// Isolated upward spikes: nodes where c exceeds both neighbours by more than modulus + dt, with the
/// modulus taken as the 95th percentile of |c(x_{i+1}) - c(x_i)|. A steep monotone stretch is not one.
inline std::vector<std::size_t> lsc_violations(const BoundaryProfile& p, double* modulus = nullptr) {
  std::vector<double> inc;
  for (std::size_t i = 1; i < p.c.size(); ++i) inc.push_back(std::abs(p.c[i] - p.c[i - 1]));
  std::sort(inc.begin(), inc.end());
  const double w = inc.empty() ? 0.0 : inc[static_cast<std::size_t>(0.95 * static_cast<double>(inc.size() - 1))];
  if (modulus) *modulus = w;
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < p.c.size(); ++i)
    if (p.c[i] > std::max(p.c[i - 1], p.c[i + 1]) + w + p.dt) out.push_back(i);
  return out;
}

}  // namespace freebound
