#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freebound/diffusion.hpp"
#include "freebound/errors.hpp"
#include "freebound/numerics.hpp"

namespace freebound {

/// Twice differentiable piece of a gain function.
struct SmoothPiece {
  RealFn value;
  RealFn d1;
  RealFn d2;
};

struct Kink {
  double location;
  double left_slope;
  double right_slope;
};

/// Point mass of a signed measure.
struct Atom {
  double location;
  double mass;
};

/// Gain g = difference of convex functions, given as smooth pieces joined at kinks.
/// Piece i covers (kink[i-1], kink[i]]; the derivative is the left derivative.
class ConvexDiffGain {
 public:
  ConvexDiffGain(std::vector<SmoothPiece> pieces, std::vector<Kink> kinks, double tol = 1e-9)
      : pieces_(std::move(pieces)), kinks_(std::move(kinks)) {
    if (pieces_.size() != kinks_.size() + 1)
      throw ConstructionError("a gain with n kinks needs n+1 smooth pieces");
    for (const auto& p : pieces_)
      if (!p.value || !p.d1 || !p.d2) throw ConstructionError("smooth piece is missing a derivative");
    for (std::size_t i = 0; i < kinks_.size(); ++i) {
      const Kink& k = kinks_[i];
      if (i > 0 && !(k.location > kinks_[i - 1].location))
        throw ConstructionError("kink locations must be strictly increasing");
      const double x = k.location;
      auto close = [tol](double a, double b) { return std::abs(a - b) <= tol * (1.0 + std::abs(a) + std::abs(b)); };
      if (!close(pieces_[i].value(x), pieces_[i + 1].value(x)))
        throw ConstructionError("gain is discontinuous at kink x=" + std::to_string(x));
      if (!close(pieces_[i].d1(x), k.left_slope))
        throw ConstructionError("left slope inconsistent with piece derivative at x=" + std::to_string(x));
      if (!close(pieces_[i + 1].d1(x), k.right_slope))
        throw ConstructionError("right slope inconsistent with piece derivative at x=" + std::to_string(x));
      locations_.push_back(x);
      if (k.right_slope != k.left_slope) atoms_.push_back({x, k.right_slope - k.left_slope});
    }
  }

  double operator()(double x) const { return piece(x).value(x); }

  /// Left derivative g'(x-), left-continuous.
  double left_deriv(double x) const {
    const std::size_t i = piece_index(x);
    if (i < kinks_.size() && kinks_[i].location == x) return kinks_[i].left_slope;
    return pieces_[i].d1(x);
  }

  double right_deriv(double x) const {
    const std::size_t i = piece_index(x);
    if (i < kinks_.size() && kinks_[i].location == x) return kinks_[i].right_slope;
    return pieces_[i].d1(x);
  }

  /// Absolutely continuous part of g''.
  double second_density(double x) const { return piece(x).d2(x); }

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::vector<double>& kink_locations() const noexcept { return locations_; }

  /// g''([a, b)) from density and atoms; equals g'(b) - g'(a).
  double second_measure(double a, double b) const {
    double total = 0.0;
    double lo = a;
    for (double k : locations_) {
      if (k <= a || k >= b) continue;
      total += integrate([this](double x) { return second_density(x); }, lo, k).value;
      lo = k;
    }
    total += integrate([this](double x) { return second_density(x); }, lo, b).value;
    for (const Atom& at : atoms_)
      if (at.location >= a && at.location < b) total += at.mass;
    return total;
  }

 private:
  std::size_t piece_index(double x) const {
    return static_cast<std::size_t>(std::lower_bound(locations_.begin(), locations_.end(), x) - locations_.begin());
  }
  const SmoothPiece& piece(double x) const { return pieces_[piece_index(x)]; }

  std::vector<SmoothPiece> pieces_;
  std::vector<Kink> kinks_;
  std::vector<double> locations_;
  std::vector<Atom> atoms_;
};

inline ConvexDiffGain gain_from_kinks(std::vector<SmoothPiece> pieces, std::vector<Kink> kinks) {
  return ConvexDiffGain(std::move(pieces), std::move(kinks));
}

inline SmoothPiece affine_piece(double intercept, double slope) {
  return {[=](double x) { return intercept + slope * x; }, [=](double) { return slope; }, [](double) { return 0.0; }};
}

/// g(x) = a + b x.
inline ConvexDiffGain gain_linear(double a, double b) { return ConvexDiffGain({affine_piece(a, b)}, {}); }

/// g(x) = |x - K|.
inline ConvexDiffGain gain_straddle(double strike) {
  return ConvexDiffGain({affine_piece(strike, -1.0), affine_piece(-strike, 1.0)}, {{strike, -1.0, 1.0}});
}

/// g(x) = -|x - K| - fee.
inline ConvexDiffGain gain_neg_straddle_fee(double strike, double fee) {
  return ConvexDiffGain({affine_piece(-strike - fee, 1.0), affine_piece(strike - fee, -1.0)}, {{strike, 1.0, -1.0}});
}

/// g(x) = (x - K)^+.
inline ConvexDiffGain gain_call(double strike) {
  return ConvexDiffGain({affine_piece(0.0, 0.0), affine_piece(-strike, 1.0)}, {{strike, 0.0, 1.0}});
}

/// Put payoff (K - y)^+ of a geometric Brownian motion with D = 2 drift / vol^2 < 1,
/// written in natural-scale coordinates x = y^(1-D) / (1-D) and rescaled by
/// (1-D)^(-1/(1-D)): g(x) = (K' - x^(1/(1-D)))^+ with K' = K (1-D)^(-1/(1-D)).
struct TransformedPut {
  double strike;
  double d;
  double power() const { return 1.0 / (1.0 - d); }
  double strike_prime() const { return strike * std::pow(1.0 - d, -power()); }
  double kink() const { return std::pow(strike_prime(), 1.0 - d); }
  /// Multiplies natural-scale values back to the original put's units.
  double value_scale() const { return std::pow(1.0 - d, power()); }
};

inline ConvexDiffGain gain_transformed_put(const TransformedPut& tp) {
  if (!(tp.d < 1.0)) throw ConstructionError("transformed put needs D < 1");
  const double p = tp.power();
  const double kp = tp.strike_prime();
  const double kbar = tp.kink();
  SmoothPiece left{[=](double x) { return kp - std::pow(x, p); }, [=](double x) { return -p * std::pow(x, p - 1.0); },
                   [=](double x) { return -p * (p - 1.0) * std::pow(x, p - 2.0); }};
  return ConvexDiffGain({left, affine_piece(0.0, 0.0)}, {{kbar, -p * std::pow(kbar, p - 1.0), 0.0}});
}

/// Piecewise-linear gain through (xs, ys), extended linearly beyond the end nodes.
inline ConvexDiffGain gain_piecewise_linear(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() < 2 || xs.size() != ys.size()) throw ConstructionError("gain table needs >= 2 matching points");
  std::vector<double> slope(xs.size() - 1);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    if (!(xs[i + 1] > xs[i])) throw ConstructionError("gain table nodes must be strictly increasing");
    slope[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
  }
  std::vector<SmoothPiece> pieces;
  std::vector<Kink> kinks;
  for (std::size_t i = 0; i < slope.size(); ++i) {
    pieces.push_back(affine_piece(ys[i] - slope[i] * xs[i], slope[i]));
    if (i > 0) kinks.push_back({xs[i], slope[i - 1], slope[i]});
  }
  return ConvexDiffGain(std::move(pieces), std::move(kinks));
}

/// Signed measure = density dz + atoms, restricted to an open domain.
struct SignedMeasure {
  RealFn density;
  std::vector<Atom> atoms;
  Interval domain;

  /// Measure of [a, b): integral of the density (split at atoms) plus atoms inside.
  double measure(double a, double b) const {
    double total = 0.0;
    double lo = a;
    for (const Atom& at : atoms) {
      if (at.location >= a && at.location < b) total += at.mass;
      if (at.location > lo && at.location < b) {
        total += integrate(density, lo, at.location, 1e-11, 1e-14, "measure density").value;
        lo = at.location;
      }
    }
    total += integrate(density, lo, b, 1e-11, 1e-14, "measure density").value;
    return total;
  }
};

/// mu(dz) = g''(dz) + 2 sigma^-2 (h - r g) dz. Throws DomainError when r < 0 at a sample of `window`.
inline SignedMeasure build_measure(const ConvexDiffGain& g, const NaturalScaleDiffusion& diff, const RealFn& rate,
                                   const std::optional<RealFn>& profit, Interval window) {
  if (!window.bounded()) throw DomainError("measure window must be bounded");
  for (int i = 0; i <= 512; ++i) {
    const double x = window.lo + window.length() * i / 512.0;
    const double r = rate(x);
    if (!(r >= 0.0)) throw DomainError("discount rate is negative at x=" + std::to_string(x));
    if (!(diff.sigma(x) > 0.0)) throw DomainError("volatility is not strictly positive at x=" + std::to_string(x));
  }
  SignedMeasure mu;
  mu.atoms = g.atoms();
  mu.domain = window;
  const RealFn sigma = diff.sigma;
  const RealFn r = rate;
  const std::optional<RealFn> h = profit;
  mu.density = [g, sigma, r, h](double z) {
    const double s = sigma(z);
    double source = -r(z) * g(z);
    if (h) source += (*h)(z);
    return g.second_density(z) + 2.0 * source / (s * s);
  };
  return mu;
}

enum class Region { pos0, neg0, null, atom_pos, atom_neg };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::pos0: return "POS0";
    case Region::neg0: return "NEG0";
    case Region::null: return "NULL";
    case Region::atom_pos: return "ATOM_POS";
    case Region::atom_neg: return "ATOM_NEG";
  }
  return "?";
}

/// Labels node x as POS0 / NEG0 when the density keeps a strict sign on (x - w, x + w)
/// away from atoms; atom nodes (nearest node to each atom) carry the atom's sign.
inline std::vector<Region> classify_regions(const SignedMeasure& mu, const std::vector<double>& nodes, double window) {
  const std::size_t n = nodes.size();
  std::vector<Region> out(n, Region::null);
  auto is_atom = [&](double z) {
    return std::any_of(mu.atoms.begin(), mu.atoms.end(), [z](const Atom& a) { return a.location == z; });
  };
  std::vector<double> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = nodes[i];
    samples.clear();
    for (int j = -4; j <= 4; ++j) samples.push_back(x + window * j / 5.0);
    const auto lo = std::upper_bound(nodes.begin(), nodes.end(), x - window);
    for (auto it = lo; it != nodes.end() && *it < x + window; ++it) {
      samples.push_back(*it);
      if (std::next(it) != nodes.end() && *std::next(it) < x + window) samples.push_back(0.5 * (*it + *std::next(it)));
    }
    double scale = 0.0;
    std::vector<double> vals;
    for (double z : samples) {
      if (is_atom(z) || !(z > mu.domain.lo && z < mu.domain.hi)) continue;
      const double f = mu.density(z);
      vals.push_back(f);
      scale = std::max(scale, std::abs(f));
    }
    if (vals.empty()) continue;
    const double tol = std::max(1e-12, 1e-8 * scale);
    if (std::all_of(vals.begin(), vals.end(), [tol](double f) { return f > tol; }))
      out[i] = Region::pos0;
    else if (std::all_of(vals.begin(), vals.end(), [tol](double f) { return f < -tol; }))
      out[i] = Region::neg0;
  }
  for (const Atom& a : mu.atoms) {
    if (a.mass == 0.0 || a.location < nodes.front() || a.location > nodes.back()) continue;
    const std::size_t j = bracket_index(nodes, a.location);
    const std::size_t k = (a.location - nodes[j] <= nodes[j + 1] - a.location) ? j : j + 1;
    out[k] = a.mass > 0.0 ? Region::atom_pos : Region::atom_neg;
  }
  return out;
}

}  // namespace freebound
