#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "freebound/config.hpp"
#include "freebound/diffusion.hpp"
#include "freebound/errors.hpp"
#include "freebound/fdsolver.hpp"
#include "freebound/geometry.hpp"
#include "freebound/io.hpp"
#include "freebound/localtime_mc.hpp"
#include "freebound/payoff.hpp"
#include "freebound/rng.hpp"

namespace freebound {

struct Problem {
  RunConfig config;
  ObstacleProblem obstacle;
  SignedMeasure measure;
  double x0;
  Interval exit;
};

inline Problem build_problem(const RunConfig& c) {
  NaturalScaleDiffusion diff = build_natural_scale(make_diffusion_spec(c.diffusion));
  ConvexDiffGain gain = [&] {
    try {
      return make_gain(c.gain);
    } catch (const ConstructionError& e) {
      throw ValidationError(e.what(), 0);
    }
  }();
  validate_atoms(c, gain);
  const Interval window{c.grid.x_min, c.grid.x_max};
  for (double x : {c.grid.x_min, c.grid.x_max})
    if (!(x > diff.interval.lo && x < diff.interval.hi))
      throw ValidationError("grid window must lie strictly inside the diffusion's state interval", c.grid_line);
  std::optional<RealFn> profit;
  if (c.profit) profit = c.profit->function();
  ObstacleProblem ob{diff, gain, c.rate.function(), profit, c.horizon, c.grid.x_min, c.grid.x_max, c.grid.grading,
                     c.scheme};
  SignedMeasure mu = build_measure(gain, diff, ob.rate, profit, window);

  double x0 = window.mid();
  if (c.verify.x0) {
    x0 = *c.verify.x0;
  } else {
    for (const Atom& a : gain.atoms())
      if (window.contains(a.location)) {
        x0 = a.location;
        break;
      }
  }
  if (!window.contains(x0)) throw ValidationError("verify.x0 lies outside the grid window", 0);
  Interval exit;
  if (c.verify.exit) {
    exit = *c.verify.exit;
  } else if (x0 > 0.0) {
    exit = {std::max(window.lo, 0.5 * x0), std::min(window.hi, 2.0 * x0)};
  } else {
    exit = {std::max(window.lo, x0 - 0.25 * window.length()), std::min(window.hi, x0 + 0.25 * window.length())};
  }
  if (!exit.contains(x0)) throw ValidationError("verify.exit must contain x0", 0);
  return {c, std::move(ob), std::move(mu), x0, exit};
}

struct GeometryResult {
  std::vector<Region> regions;
  BoundaryProfile profile;
  std::vector<MonotonicityReport> windows;
};

inline GeometryResult analyze(const Problem& p, const ValueSurface& s) {
  GeometryResult g;
  g.regions = classify_regions(p.measure, s.grid.x, s.grid.max_dx());
  g.profile = extract_boundary(s);
  g.windows = analyze_geometry(g.profile, g.regions);
  return g;
}

struct CheckRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
  double std_error = 0.0;
  bool pass = false;
  std::string note;
};

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"dominance", "terminal",   "time-monotone", "up-set",
                                              "connectedness", "residual", "lagrange",      "local-time",
                                              "positivity",    "lipschitz", "martingale",   "supermartingale"};
  return names;
}

namespace detail {

inline McOptions mc_options(const McConfig& m) {
  McOptions o;
  o.dt = m.dt;
  o.n_paths = m.n_paths;
  o.seed = m.seed;
  o.workers = m.workers;
  o.eps0 = m.eps0;
  return o;
}

inline bool wanted(const std::optional<std::string>& only, const std::string& name) { return !only || *only == name; }

}  // namespace detail

/// Runs the structural and Monte Carlo checks; `only` restricts to one named check.
inline std::vector<CheckRow> run_checks(const Problem& p, const ValueSurface& s, const GeometryResult& geo,
                                        const std::optional<std::string>& only) {
  const RunConfig& c = p.config;
  const auto& diff = p.obstacle.diffusion;
  const auto& gain = p.obstacle.gain;
  const McOptions mo = detail::mc_options(c.mc);
  const double allowance = c.mc.bias_constant * std::sqrt(c.mc.dt);
  const double horizon = c.horizon;
  std::vector<CheckRow> rows;
  auto want = [&](const char* n) { return detail::wanted(only, n); };

  if (want("dominance")) {
    double m = kInf;
    for (std::size_t k = 0; k < s.levels(); ++k)
      for (std::size_t i = 0; i < s.nx(); ++i) m = std::min(m, s.excess(k, i));
    rows.push_back({"dominance", m, -1e-12, m + 1e-12, 0.0, m >= -1e-12, "min(v - g)"});
  }
  if (want("terminal")) {
    double m = 0.0;
    for (std::size_t i = 0; i < s.nx(); ++i) m = std::max(m, std::abs(s.excess(s.levels() - 1, i)));
    rows.push_back({"terminal", m, 0.0, m, 0.0, m == 0.0, "max |v(T) - g|"});
  }
  if (want("time-monotone")) {
    double m = kInf;
    for (std::size_t k = 0; k + 1 < s.levels(); ++k)
      for (std::size_t i = 0; i < s.nx(); ++i) m = std::min(m, s.at(k, i) - s.at(k + 1, i));
    rows.push_back({"time-monotone", m, -1e-10, m + 1e-10, 0.0, m >= -1e-10, "min v(t_k) - v(t_k+1)"});
  }
  if (want("up-set")) {
    const double r = static_cast<double>(geo.profile.repaired);
    rows.push_back({"up-set", r, 0.0, r, 0.0, geo.profile.repaired == 0, "repaired mask nodes"});
  }
  if (want("connectedness")) {
    std::size_t v = 0;
    for (auto [a, b] : neg0_windows(geo.regions)) v += connectedness_violations(geo.profile, a, b);
    rows.push_back({"connectedness", static_cast<double>(v), 0.0, static_cast<double>(v), 0.0, v == 0,
                    "continuation nodes inside stopping rectangles"});
  }
  if (want("residual")) {
    const double m = max_residual(s);
    rows.push_back({"residual", m, 0.05, m - 0.05, 0.0, m <= 0.05, "max |complementarity residual|"});
  }
  if (want("lagrange")) {
    const auto r = verify_lagrange(diff, gain, p.obstacle.rate, p.obstacle.profit, p.x0,
                                   ExitInterval{p.exit, 0.5 * horizon}, mo);
    rows.push_back({"lagrange", r.lhs, r.rhs, r.gap, r.std_error, std::abs(r.gap) <= 3.0 * r.std_error + allowance,
                    "tau = T/2 ^ exit"});
  }
  if (want("local-time")) {
    const StoppingRule rule = ExitInterval{p.exit, 0.5 * horizon};
    const auto occ = estimate_local_time(diff, p.x0, p.x0, p.obstacle.rate, rule, mo, LocalTimeMethod::occupation);
    const auto tan = estimate_local_time(diff, p.x0, p.x0, p.obstacle.rate, rule, mo, LocalTimeMethod::tanaka);
    const double se = std::hypot(occ.std_error, tan.std_error);
    rows.push_back({"local-time", occ.value, tan.value, occ.value - tan.value, se,
                    std::abs(occ.value - tan.value) <= 3.0 * se + allowance, "occupation vs tanaka at x0"});
  }
  if (want("positivity")) {
    const auto tab = verify_positivity(diff, p.x0, p.exit, 0.5 * horizon, c.verify.positivity_levels,
                                       p.obstacle.rate, mo);
    bool ok = true;
    double worst = kInf, worst_se = 0.0;
    for (std::size_t j = 1; j + 1 < tab.size(); ++j) {
      const double z = (j == 1 || j + 2 == tab.size()) ? 2.0 : 3.0;
      if (!(tab[j].value > z * tab[j].std_error)) ok = false;
      const double ratio = tab[j].std_error > 0.0 ? tab[j].value / tab[j].std_error : kInf;
      if (ratio < worst) {
        worst = ratio;
        worst_se = tab[j].std_error;
      }
    }
    ok = ok && tab.front().value == 0.0 && tab.back().value == 0.0;
    rows.push_back({"positivity", worst, 3.0, worst - 3.0, worst_se, ok, "min estimate / stderr over interior levels"});
  }
  if (want("lipschitz")) {
    if (!diff.has_density()) {
      rows.push_back({"lipschitz", 0.0, 0.0, 0.0, 0.0, true, "skipped: no registered transition density"});
    } else {
      CounterRng rng(c.mc.seed, 0x4c495053u);
      bool ok = true;
      double worst_obs = 0.0, worst_bound = 0.0, worst_slack = kInf;
      for (std::size_t j = 0; j < c.verify.random_triples; ++j) {
        const double t1 = 0.8 * horizon * rng.uniform();
        const double t2 = t1 + (0.9 * horizon - t1) * rng.uniform();
        const std::size_t lo = s.nx() / 10, hi = s.nx() - 1 - s.nx() / 10;
        const std::size_t i = lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo));
        const auto r = verify_time_lipschitz(diff, p.measure, s, s.grid.x[i], t1, t2);
        ok = ok && r.pass;
        if (r.bound - r.observed < worst_slack) {
          worst_slack = r.bound - r.observed;
          worst_obs = r.observed;
          worst_bound = r.bound;
        }
      }
      rows.push_back({"lipschitz", worst_obs, worst_bound, worst_obs - worst_bound, 0.0, ok,
                      "tightest of the random (t1, t2, x) triples"});
    }
  }
  for (const bool stopped : {true, false}) {
    const char* name = stopped ? "martingale" : "supermartingale";
    if (!want(name)) continue;
    const double t = 0.25 * horizon, span = 0.25 * horizon;
    const auto r = verify_martingale(diff, s, p.obstacle.rate, p.obstacle.profit, t, p.x0, span, stopped, mo);
    const double tol = 3.0 * r.std_error + r.interp_error;
    const bool ok = stopped ? std::abs(r.mc - r.value) <= tol : r.mc <= r.value + tol;
    rows.push_back({name, r.mc, r.value, r.mc - r.value, r.std_error, ok,
                    stopped ? "stopped at the exercise region" : "fixed horizon"});
  }
  return rows;
}

enum class Subcommand { solve, geometry, verify, all };

inline Subcommand parse_subcommand(const std::string& s) {
  if (s == "solve") return Subcommand::solve;
  if (s == "geometry") return Subcommand::geometry;
  if (s == "verify") return Subcommand::verify;
  if (s == "all") return Subcommand::all;
  throw ValidationError("unknown subcommand '" + s + "'", 0);
}

struct RunOptions {
  Subcommand command = Subcommand::all;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t refine = 0;
  std::optional<std::string> only;
  bool dry_run = false;
};

enum ExitCode { kExitPass = 0, kExitValidation = 1, kExitSolver = 2, kExitVerification = 3 };

namespace detail {

inline void write_surface(const std::string& path, const ValueSurface& s) {
  CsvWriter w(path, {"t", "x", "v", "g", "v_minus_g", "mask", "residual", "dv_dt", "dv_dx", "d2v_dx2"});
  for (std::size_t k = 0; k < s.levels(); ++k)
    for (std::size_t i = 0; i < s.nx(); ++i) {
      const std::size_t id = s.index(k, i);
      w.row(std::vector<double>{s.grid.t[k], s.grid.x[i], s.v[id], s.g[i], s.v[id] - s.g[i],
                                static_cast<double>(s.mask[id]), s.residual[id], s.dv_dt[id], s.dv_dx[id],
                                s.d2v_dx2[id]});
    }
}

inline void write_boundary(const std::string& path, const GeometryResult& g) {
  CsvWriter w(path, {"x", "c", "level", "region"});
  const auto& p = g.profile;
  for (std::size_t i = 0; i < p.x.size(); ++i)
    w.row(std::vector<std::string>{format_double(p.x[i]), format_double(p.c[i]), std::to_string(p.level[i]),
                                   region_name(g.regions[i])});
}

inline void write_inverse(const std::string& path, const GeometryResult& g) {
  const auto& p = g.profile;
  std::vector<std::string> header{"t"};
  for (std::size_t j = 0; j < p.inverses.size(); ++j) header.push_back("b" + std::to_string(j + 1));
  CsvWriter w(path, header);
  for (std::size_t k = 0; k <= p.terminal_level(); ++k) {
    std::vector<double> row{p.dt * static_cast<double>(k)};
    for (const auto& inv : p.inverses) row.push_back(inv.b[k]);
    w.row(row);
  }
}

inline std::string geometry_report(const GeometryResult& g) {
  std::ostringstream o;
  const auto& p = g.profile;
  o << "features " << p.features.size() << '\n';
  for (const auto& f : p.features)
    o << feature_name(f.kind) << " x=" << format_double(f.location) << " node=" << f.node
      << " c=" << format_double(f.c_value) << " flank_left=" << format_double(p.x[f.flank_left])
      << " flank_right=" << format_double(p.x[f.flank_right]) << " c_flank_left=" << format_double(f.c_flank_left)
      << " c_flank_right=" << format_double(f.c_flank_right) << " width_left=" << format_double(f.width_left)
      << " width_right=" << format_double(f.width_right) << '\n';
  for (const auto& w : g.windows)
    o << "WINDOW x=[" << format_double(p.x[w.first]) << ", " << format_double(p.x[w.last]) << "] a_star="
      << format_double(p.x[w.a_star]) << " b_star=" << format_double(p.x[w.b_star])
      << " strict_down=" << w.strict_down << " strict_up=" << w.strict_up << " flat_at_zero=" << w.flat_at_zero
      << " plateaus=" << w.down_plateaus.size() + w.up_plateaus.size() << '\n';
  for (std::size_t j = 0; j < p.inverses.size(); ++j) {
    const auto& inv = p.inverses[j];
    const std::size_t n = inv.b.size();
    o << "INVERSE b" << j + 1 << " c_" << direction_name(inv.direction) << " x=[" << format_double(p.x[inv.first])
      << ", " << format_double(p.x[inv.last]) << "] b(T)=" << format_double(inv.b[n - 1])
      << " b(T-dt)=" << format_double(n > 1 ? inv.b[n - 2] : kNaN) << '\n';
  }
  // Junctions between NEG0 windows and other regions are reported, not classified.
  for (std::size_t i = 0; i + 1 < g.regions.size(); ++i) {
    const bool a = g.regions[i] == Region::neg0, b = g.regions[i + 1] == Region::neg0;
    if (a == b) continue;
    o << "JUNCTION x=" << format_double(0.5 * (p.x[i] + p.x[i + 1])) << ' ' << region_name(g.regions[i]) << '|'
      << region_name(g.regions[i + 1]) << " c_left=" << format_double(p.c[i])
      << " c_right=" << format_double(p.c[i + 1]) << '\n';
  }
  double modulus = 0.0;
  const auto lsc = lsc_violations(p, &modulus);
  o << "LSC violations=" << lsc.size() << " modulus=" << format_double(modulus) << '\n';
  return o.str();
}

inline std::vector<Probe> default_probes(const Problem& p) {
  const double w = 0.1 * (p.config.grid.x_max - p.config.grid.x_min);
  const double T = p.config.horizon;
  return {{0.0, p.x0}, {0.5 * T, p.x0}, {0.0, std::max(p.config.grid.x_min + w, p.x0 - w)},
          {0.0, std::min(p.config.grid.x_max - w, p.x0 + w)}};
}

inline void write_refinement(const std::string& path, const RefinementReport& r, const std::vector<Probe>& probes) {
  CsvWriter w(path, {"probe", "t", "x", "level", "nx", "nt", "value", "error", "order"});
  for (std::size_t p = 0; p < probes.size(); ++p)
    for (std::size_t l = 0; l < r.nx.size(); ++l) {
      const double err = l < r.errors[p].size() ? r.errors[p][l] : kNaN;
      const double ord = (l >= 1 && l - 1 < r.orders[p].size()) ? r.orders[p][l - 1] : kNaN;
      w.row(std::vector<double>{static_cast<double>(p), probes[p].t, probes[p].x, static_cast<double>(l),
                                static_cast<double>(r.nx[l]), static_cast<double>(r.nt[l]), r.values[p][l], err,
                                ord});
    }
}

}  // namespace detail

/// Human-readable resolved setup, printed by --dry-run.
inline std::string describe(const Problem& p) {
  const RunConfig& c = p.config;
  const SpaceTimeGrid g = p.obstacle.grid(c.grid.nx, c.grid.nt);
  std::ostringstream o;
  o << "problem " << (c.name.empty() ? "(unnamed)" : c.name) << ": diffusion " << c.diffusion.family << ", gain "
    << c.gain.family << ", T=" << c.horizon << '\n';
  o << "grid x=[" << c.grid.x_min << ", " << c.grid.x_max << "] nx=" << g.nx() << " nt=" << g.steps()
    << " dx=[" << g.min_dx() << ", " << g.max_dx() << "] dt=" << g.dt() << " grading=" << c.grid.grading << '\n';
  for (std::size_t k : g.atom_nodes) o << "atom node " << k << " x=" << format_double(g.x[k]) << '\n';
  o << "scheme theta=" << c.scheme.theta << " rannacher_steps=" << c.scheme.rannacher_steps
    << " omega=" << c.scheme.psor.omega << " tol=" << c.scheme.psor.tol << " max_iter=" << c.scheme.psor.max_iter
    << " brennan_schwartz=" << c.scheme.brennan_schwartz << '\n';
  o << "mc n_paths=" << c.mc.n_paths << " dt=" << c.mc.dt << " seed=" << c.mc.seed << " eps0=" << c.mc.eps0
    << " bias_constant=" << c.mc.bias_constant << '\n';
  o << "verify x0=" << p.x0 << " exit=(" << p.exit.lo << ", " << p.exit.hi << ")\n";
  return o.str();
}

/// Executes one subcommand and writes its artifacts. Returns the process exit code; errors
/// propagate as exceptions (see exit_code_for).
inline int run(RunConfig cfg, const RunOptions& opt, std::ostream& log) {
  if (opt.seed) cfg.mc.seed = *opt.seed;
  if (opt.out) cfg.outputs.dir = *opt.out;
  if (opt.only && std::find(check_names().begin(), check_names().end(), *opt.only) == check_names().end())
    throw ValidationError("unknown check '" + *opt.only + "'", 0);
  if (opt.refine == 1) throw ValidationError("--refine needs at least 2 levels", 0);
  const Problem prob = build_problem(cfg);
  if (opt.dry_run) {
    log << describe(prob) << "outputs dir=" << prob.config.outputs.dir << '\n';
    return kExitPass;
  }
  namespace fs = std::filesystem;
  const fs::path dir(cfg.outputs.dir);
  fs::create_directories(dir);
  auto emit = [&](const char* artifact) {
    return cfg.outputs.artifacts.empty() || cfg.outputs.artifacts.count(artifact) > 0;
  };
  const bool all = opt.command == Subcommand::all;
  const ValueSurface s = prob.obstacle.solve(cfg.grid.nx, cfg.grid.nt);
  log << "solved " << s.nx() << "x" << s.levels() << " (psor levels " << s.stats.psor_levels << ", direct levels "
      << s.stats.direct_levels << ")\n";
  for (const auto& w : s.stats.warnings) log << "warning: " << w << '\n';
  if ((opt.command == Subcommand::solve || all) && emit("surface")) detail::write_surface((dir / "surface.csv").string(), s);
  if (opt.command == Subcommand::solve) return kExitPass;

  const GeometryResult geo = analyze(prob, s);
  const std::string report = detail::geometry_report(geo);
  if (opt.command == Subcommand::geometry || all) {
    if (emit("boundary")) detail::write_boundary((dir / "boundary.csv").string(), geo);
    if (emit("inverse")) detail::write_inverse((dir / "inverse_boundary.csv").string(), geo);
    if (emit("features")) {
      std::ofstream f(dir / "features.txt", std::ios::binary);
      f << report;
    }
    log << report;
  }
  if (opt.command == Subcommand::geometry) return kExitPass;

  const auto rows = run_checks(prob, s, geo, opt.only);
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.pass;
  if (emit("verification")) {
    CsvWriter w((dir / "verification.csv").string(), {"name", "lhs", "rhs", "gap", "stderr", "pass"});
    for (const auto& r : rows)
      w.row(std::vector<std::string>{r.name, format_double(r.lhs), format_double(r.rhs), format_double(r.gap),
                                     format_double(r.std_error), r.pass ? "1" : "0"});
  }
  for (const auto& r : rows)
    log << (r.pass ? "PASS " : "FAIL ") << r.name << " lhs=" << format_double(r.lhs) << " rhs=" << format_double(r.rhs)
        << " stderr=" << format_double(r.std_error) << " (" << r.note << ")\n";

  if (all) {
    const std::size_t levels = opt.refine;
    std::optional<RefinementReport> ref;
    std::vector<Probe> probes = detail::default_probes(prob);
    if (levels >= 2) {
      ref = richardson_refine(prob.obstacle, cfg.grid.nx, cfg.grid.nt, levels, probes);
      if (emit("refinement")) detail::write_refinement((dir / "refinement.csv").string(), *ref, probes);
    }
    if (emit("summary")) {
      std::ofstream f(dir / "summary.txt", std::ios::binary);
      f << describe(prob);
      f << "solve psor_levels=" << s.stats.psor_levels << " direct_levels=" << s.stats.direct_levels
        << " max_psor_iterations=" << s.stats.max_psor_iterations << " tol_b=" << format_double(s.tol_b) << '\n';
      f << report;
      for (const auto& r : rows)
        f << (r.pass ? "PASS " : "FAIL ") << r.name << " lhs=" << format_double(r.lhs)
          << " rhs=" << format_double(r.rhs) << " gap=" << format_double(r.gap)
          << " stderr=" << format_double(r.std_error) << " (" << r.note << ")\n";
      if (ref)
        for (const auto& w : ref->warnings) f << "refinement warning: " << w << '\n';
      f << "overall " << (ok ? "PASS" : "FAIL") << '\n';
    }
  }
  return ok ? kExitPass : kExitVerification;
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const PreconditionError*>(&e)) return kExitValidation;
  if (dynamic_cast<const DomainError*>(&e) || dynamic_cast<const UnsupportedFamily*>(&e)) return kExitValidation;
  return kExitSolver;
}

}  // namespace freebound
