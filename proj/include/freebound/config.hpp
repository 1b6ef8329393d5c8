#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "freebound/diffusion.hpp"
#include "freebound/errors.hpp"
#include "freebound/fdsolver.hpp"
#include "freebound/numerics.hpp"
#include "freebound/payoff.hpp"

namespace freebound {

/// Frozen bias allowance c in c * sqrt(dt), fitted on the Brownian local-time cases.
inline constexpr double kBiasConstant = 0.35;

/// Constant value or a piecewise-linear table in the state variable (flat outside).
struct StateFunctionConfig {
  double constant = 0.0;
  std::vector<double> x, y;

  bool tabulated() const noexcept { return !x.empty(); }
  RealFn function() const {
    if (!tabulated()) return [c = constant](double) { return c; };
    return [xs = x, ys = y](double u) {
      if (u <= xs.front()) return ys.front();
      if (u >= xs.back()) return ys.back();
      return interp_linear(xs, ys, u);
    };
  }
};

struct DiffusionConfig {
  std::string family = "gbm";  ///< bm | gbm | custom-quadrature
  double drift = 0.0;
  double sigma = 1.0;
  std::vector<double> y, alpha, beta;
  std::optional<double> anchor;
};

struct GainConfig {
  std::string family = "straddle";  ///< straddle | neg-straddle-fee | put-transformed | call | linear | custom-table
  double strike = 1.0;
  double fee = 0.0;
  std::optional<double> d;  ///< put-transformed; derived from a gbm diffusion when absent
  double a = 0.0, b = 0.0;  ///< linear: a + b x
  std::vector<double> x, y;
};

struct GridConfig {
  double x_min = 0.0, x_max = 1.0;
  std::size_t nx = 401, nt = 400;
  double grading = 0.0;
};

struct McConfig {
  std::size_t n_paths = 20000;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double eps0 = 0.5;
  double bias_constant = kBiasConstant;
};

struct VerifyConfig {
  std::optional<double> x0;         ///< defaults to the first atom inside the window
  std::optional<Interval> exit;     ///< defaults to (x0 / 2, 2 x0) clipped to the window
  std::size_t positivity_levels = 21;
  std::size_t random_triples = 5;
};

struct OutputConfig {
  std::string dir = "out";
  std::set<std::string> artifacts;  ///< empty means everything
};

struct RunConfig {
  std::string name;
  DiffusionConfig diffusion;
  GainConfig gain;
  StateFunctionConfig rate;
  std::optional<StateFunctionConfig> profit;
  double horizon = 1.0;
  GridConfig grid;
  SchemeParams scheme;
  McConfig mc;
  VerifyConfig verify;
  OutputConfig outputs;
  std::size_t refine = 0;
  int grid_line = 0;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T read_scalar(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError("invalid value for '" + key + "'", line_of(n));
  }
}

template <class T>
void read_opt(const YAML::Node& parent, const char* key, T& out) {
  if (const YAML::Node n = parent[key]) out = read_scalar<T>(n, key);
}

inline std::vector<double> read_array(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) throw ValidationError("'" + key + "' must be a list of numbers", line_of(n));
  std::vector<double> out;
  for (const auto& e : n) out.push_back(read_scalar<double>(e, key));
  return out;
}

inline void check_keys(const YAML::Node& n, const std::string& section, const std::set<std::string>& allowed) {
  if (!n.IsMap()) throw ValidationError("section '" + section + "' must be a mapping", line_of(n));
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in '" + section + "'", line_of(kv.first));
  }
}

inline StateFunctionConfig read_state_function(const YAML::Node& n, const std::string& key) {
  StateFunctionConfig f;
  if (n.IsScalar()) {
    f.constant = read_scalar<double>(n, key);
    return f;
  }
  check_keys(n, key, {"x", "values"});
  if (!n["x"] || !n["values"]) throw ValidationError("'" + key + "' table needs 'x' and 'values'", line_of(n));
  f.x = read_array(n["x"], key + ".x");
  f.y = read_array(n["values"], key + ".values");
  if (f.x.size() < 2 || f.x.size() != f.y.size())
    throw ValidationError("'" + key + "' table needs matching arrays of length >= 2", line_of(n));
  for (std::size_t i = 1; i < f.x.size(); ++i)
    if (!(f.x[i] > f.x[i - 1])) throw ValidationError("'" + key + ".x' must be strictly increasing", line_of(n["x"]));
  return f;
}

}  // namespace detail

/// Parses and validates a run configuration. Errors carry the offending line.
inline RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ValidationError(e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ValidationError("configuration must be a mapping", 1);
  using detail::check_keys;
  using detail::line_of;
  using detail::read_opt;
  check_keys(root, "top level", {"name", "problem", "grid", "scheme", "mc", "verify", "outputs"});
  RunConfig c;
  read_opt(root, "name", c.name);

  const YAML::Node prob = root["problem"];
  if (!prob) throw ValidationError("missing section 'problem'", 1);
  check_keys(prob, "problem", {"diffusion", "gain", "rate", "profit", "horizon"});
  const int prob_line = line_of(prob);

  const YAML::Node dn = prob["diffusion"];
  if (!dn) throw ValidationError("missing 'problem.diffusion'", prob_line);
  check_keys(dn, "problem.diffusion", {"family", "drift", "sigma", "y", "alpha", "beta", "anchor"});
  read_opt(dn, "family", c.diffusion.family);
  read_opt(dn, "drift", c.diffusion.drift);
  read_opt(dn, "sigma", c.diffusion.sigma);
  if (dn["anchor"]) c.diffusion.anchor = detail::read_scalar<double>(dn["anchor"], "anchor");
  if (c.diffusion.family == "custom-quadrature") {
    if (!dn["y"] || !dn["alpha"] || !dn["beta"])
      throw ValidationError("custom-quadrature needs 'y', 'alpha' and 'beta' tables", line_of(dn));
    c.diffusion.y = detail::read_array(dn["y"], "y");
    c.diffusion.alpha = detail::read_array(dn["alpha"], "alpha");
    c.diffusion.beta = detail::read_array(dn["beta"], "beta");
  } else if (c.diffusion.family != "bm" && c.diffusion.family != "gbm") {
    throw ValidationError("unknown diffusion family '" + c.diffusion.family + "'", line_of(dn["family"]));
  }
  if (c.diffusion.family != "custom-quadrature" && !(c.diffusion.sigma > 0.0))
    throw ValidationError("diffusion sigma must be positive", line_of(dn));

  const YAML::Node gn = prob["gain"];
  if (!gn) throw ValidationError("missing 'problem.gain'", prob_line);
  check_keys(gn, "problem.gain", {"family", "K", "eta0", "D", "a", "b", "x", "y"});
  read_opt(gn, "family", c.gain.family);
  read_opt(gn, "K", c.gain.strike);
  read_opt(gn, "eta0", c.gain.fee);
  read_opt(gn, "a", c.gain.a);
  read_opt(gn, "b", c.gain.b);
  if (gn["D"]) c.gain.d = detail::read_scalar<double>(gn["D"], "D");
  static const std::set<std::string> gains{"straddle", "neg-straddle-fee", "put-transformed", "call", "linear",
                                           "custom-table"};
  if (!gains.count(c.gain.family))
    throw ValidationError("unknown gain family '" + c.gain.family + "'", line_of(gn["family"]));
  if (c.gain.family == "custom-table") {
    if (!gn["x"] || !gn["y"]) throw ValidationError("custom-table gain needs 'x' and 'y'", line_of(gn));
    c.gain.x = detail::read_array(gn["x"], "x");
    c.gain.y = detail::read_array(gn["y"], "y");
  }
  if (c.gain.family == "put-transformed") {
    if (c.diffusion.family == "gbm") {
      const double d = 2.0 * c.diffusion.drift / (c.diffusion.sigma * c.diffusion.sigma);
      if (c.gain.d && std::abs(*c.gain.d - d) > 1e-12)
        throw ValidationError("gain D does not match 2 drift / sigma^2 of the gbm diffusion", line_of(gn["D"]));
      c.gain.d = d;
    }
    if (!c.gain.d) throw ValidationError("put-transformed gain needs D", line_of(gn));
    if (!(*c.gain.d < 1.0)) throw ValidationError("put-transformed gain needs D < 1", line_of(gn));
  }
  if (c.gain.fee < 0.0) throw ValidationError("eta0 must be nonnegative", line_of(gn));

  if (prob["rate"]) c.rate = detail::read_state_function(prob["rate"], "rate");
  if (prob["profit"]) c.profit = detail::read_state_function(prob["profit"], "profit");
  read_opt(prob, "horizon", c.horizon);
  if (!(c.horizon > 0.0)) throw ValidationError("horizon T must be positive", line_of(prob["horizon"] ? prob["horizon"] : prob));
  {
    const auto& r = c.rate;
    bool negative = r.tabulated() ? false : r.constant < 0.0;
    for (double v : r.y) negative = negative || v < 0.0;
    if (negative) throw ValidationError("discount rate must be nonnegative", line_of(prob["rate"]));
  }

  const YAML::Node grid = root["grid"];
  if (!grid) throw ValidationError("missing section 'grid'", 1);
  c.grid_line = line_of(grid);
  check_keys(grid, "grid", {"x_min", "x_max", "nx", "nt", "grading"});
  if (!grid["x_min"] || !grid["x_max"]) throw ValidationError("grid needs 'x_min' and 'x_max'", line_of(grid));
  read_opt(grid, "x_min", c.grid.x_min);
  read_opt(grid, "x_max", c.grid.x_max);
  read_opt(grid, "nx", c.grid.nx);
  read_opt(grid, "nt", c.grid.nt);
  read_opt(grid, "grading", c.grid.grading);
  if (!(c.grid.x_max > c.grid.x_min)) throw ValidationError("grid needs x_min < x_max", line_of(grid));
  if (c.grid.nx < 16) throw ValidationError("grid.nx must be at least 16", line_of(grid["nx"] ? grid["nx"] : grid));
  if (c.grid.nt < 16) throw ValidationError("grid.nt must be at least 16", line_of(grid["nt"] ? grid["nt"] : grid));
  if (c.grid.grading < 0.0 || c.grid.grading > 9.0)
    throw ValidationError("grid.grading must lie in [0, 9]", line_of(grid));

  if (const YAML::Node s = root["scheme"]) {
    check_keys(s, "scheme", {"theta", "rannacher_steps", "omega", "tol", "max_iter", "brennan_schwartz"});
    read_opt(s, "theta", c.scheme.theta);
    read_opt(s, "rannacher_steps", c.scheme.rannacher_steps);
    read_opt(s, "omega", c.scheme.psor.omega);
    read_opt(s, "tol", c.scheme.psor.tol);
    read_opt(s, "max_iter", c.scheme.psor.max_iter);
    read_opt(s, "brennan_schwartz", c.scheme.brennan_schwartz);
    if (c.scheme.theta < 0.0 || c.scheme.theta > 1.0) throw ValidationError("scheme.theta must lie in [0, 1]", line_of(s));
    if (!(c.scheme.psor.omega > 0.0 && c.scheme.psor.omega < 2.0))
      throw ValidationError("scheme.omega must lie in (0, 2)", line_of(s));
  }
  if (const YAML::Node m = root["mc"]) {
    check_keys(m, "mc", {"n_paths", "dt", "seed", "workers", "eps0", "bias_constant"});
    read_opt(m, "n_paths", c.mc.n_paths);
    read_opt(m, "dt", c.mc.dt);
    read_opt(m, "seed", c.mc.seed);
    read_opt(m, "workers", c.mc.workers);
    read_opt(m, "eps0", c.mc.eps0);
    read_opt(m, "bias_constant", c.mc.bias_constant);
    if (c.mc.n_paths < 2) throw ValidationError("mc.n_paths must be at least 2", line_of(m));
    if (!(c.mc.dt > 0.0)) throw ValidationError("mc.dt must be positive", line_of(m));
    if (!(c.mc.eps0 > 0.0)) throw ValidationError("mc.eps0 must be positive", line_of(m));
  }
  if (const YAML::Node v = root["verify"]) {
    check_keys(v, "verify", {"x0", "exit", "positivity_levels", "random_triples"});
    if (v["x0"]) c.verify.x0 = detail::read_scalar<double>(v["x0"], "x0");
    if (v["exit"]) {
      const auto e = detail::read_array(v["exit"], "exit");
      if (e.size() != 2 || !(e[1] > e[0])) throw ValidationError("verify.exit must be [lo, hi] with lo < hi", line_of(v["exit"]));
      c.verify.exit = Interval{e[0], e[1]};
    }
    read_opt(v, "positivity_levels", c.verify.positivity_levels);
    read_opt(v, "random_triples", c.verify.random_triples);
    if (c.verify.positivity_levels < 3) throw ValidationError("verify.positivity_levels must be at least 3", line_of(v));
  }
  if (const YAML::Node o = root["outputs"]) {
    check_keys(o, "outputs", {"dir", "artifacts"});
    read_opt(o, "dir", c.outputs.dir);
    if (const YAML::Node a = o["artifacts"]) {
      static const std::set<std::string> known{"surface", "boundary", "inverse", "features", "verification",
                                               "summary", "refinement"};
      for (const auto& e : a) {
        const auto name = detail::read_scalar<std::string>(e, "artifacts");
        if (!known.count(name)) throw ValidationError("unknown artifact '" + name + "'", line_of(e));
        c.outputs.artifacts.insert(name);
      }
    }
  }
  return c;
}

inline DiffusionSpec make_diffusion_spec(const DiffusionConfig& d) {
  if (d.family == "bm") return DiffusionSpec::brownian(d.sigma);
  if (d.family == "gbm") return DiffusionSpec::geometric_brownian(d.drift, d.sigma);
  DiffusionSpec s = DiffusionSpec::tabulated(d.y, d.alpha, d.beta);
  s.anchor = d.anchor;
  return s;
}

inline ConvexDiffGain make_gain(const GainConfig& g) {
  if (g.family == "straddle") return gain_straddle(g.strike);
  if (g.family == "neg-straddle-fee") return gain_neg_straddle_fee(g.strike, g.fee);
  if (g.family == "put-transformed") return gain_transformed_put({g.strike, *g.d});
  if (g.family == "call") return gain_call(g.strike);
  if (g.family == "linear") return gain_linear(g.a, g.b);
  return gain_piecewise_linear(g.x, g.y);
}

/// Checks that need the built gain: atoms must fall strictly inside the grid window.
inline void validate_atoms(const RunConfig& c, const ConvexDiffGain& g) {
  for (const Atom& a : g.atoms())
    if (!(a.location > c.grid.x_min && a.location < c.grid.x_max))
      throw ValidationError("gain atom at x=" + std::to_string(a.location) + " lies outside the grid window [" +
                                std::to_string(c.grid.x_min) + ", " + std::to_string(c.grid.x_max) + "]",
                            c.grid_line);
}

}  // namespace freebound
