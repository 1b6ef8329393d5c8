#include <gtest/gtest.h>

#include <cmath>

#include "freebound/geometry.hpp"
#include "problems.hpp"

using namespace freebound;
using namespace testing_problems;

namespace {

std::vector<Region> regions_for(const ObstacleProblem& p, const ValueSurface& s) {
  const auto mu = build_measure(p.gain, p.diffusion, p.rate, p.profit, {p.x_min, p.x_max});
  return classify_regions(mu, s.grid.x, s.grid.max_dx());
}

struct Analysed {
  ValueSurface surface;
  std::vector<Region> regions;
  BoundaryProfile profile;
  std::vector<MonotonicityReport> windows;
};

Analysed analyse(const ObstacleProblem& p, std::size_t nx, std::size_t nt) {
  Analysed a{p.solve(nx, nt), {}, {}, {}};
  a.regions = regions_for(p, a.surface);
  a.profile = extract_boundary(a.surface);
  a.windows = analyze_geometry(a.profile, a.regions);
  return a;
}

const Analysed& straddle401() {
  static const Analysed a = analyse(straddle(), 401, 400);
  return a;
}

const Analysed& put401() {
  static const Analysed a = analyse(put(), 401, 400);
  return a;
}

}  // namespace

TEST(Boundary, LinearGainStopsImmediately) {
  ObstacleProblem p{build_natural_scale(DiffusionSpec::brownian()), gain_linear(0.0, 1.0), constant(0.0)};
  p.x_min = -1.0;
  p.x_max = 1.0;
  const auto prof = extract_boundary(p.solve(41, 20));
  for (double c : prof.c) EXPECT_EQ(c, 0.0);
}

TEST(Boundary, ConvexGainNeverStopsEarly) {
  SmoothPiece sq{[](double x) { return x * x; }, [](double x) { return 2.0 * x; }, [](double) { return 2.0; }};
  ObstacleProblem p{build_natural_scale(DiffusionSpec::brownian()), ConvexDiffGain({sq}, {}), constant(0.0)};
  p.x_min = -3.0;
  p.x_max = 3.0;
  const auto s = p.solve(61, 30);
  auto prof = extract_boundary(s);
  for (std::size_t i = 1; i + 1 < prof.c.size(); ++i) EXPECT_EQ(prof.c[i], 1.0);
  detect_features(prof, regions_for(p, s));
  EXPECT_TRUE(prof.features.empty());
  // All-continuation window: the inverse is defined only at maturity.
  const auto inv = invert_boundary(prof, 5, 20, Direction::increasing);
  for (std::size_t k = 0; k + 1 < inv.b.size(); ++k) EXPECT_TRUE(std::isnan(inv.b[k]));
}

TEST(Features, StraddleBay) {
  const auto& a = straddle401();
  ASSERT_EQ(a.profile.features.size(), 1u);
  const auto& f = a.profile.features[0];
  EXPECT_EQ(f.kind, FeatureKind::bay);
  EXPECT_EQ(f.location, 1.0);
  EXPECT_EQ(f.c_value, 1.0);
  EXPECT_LT(f.c_flank_left, 1.0 - a.profile.dt);
  EXPECT_LT(f.c_flank_right, 1.0 - a.profile.dt);
  EXPECT_EQ(a.regions[f.node], Region::atom_pos);
  // Near K the boundary only closes at maturity, so c = T between the flanks and below T outside.
  for (std::size_t i = 1; i + 1 < a.profile.c.size(); ++i) {
    if (i > f.flank_left && i < f.flank_right) {
      EXPECT_GE(a.profile.c[i], 1.0 - a.profile.dt) << a.profile.x[i];
    } else {
      EXPECT_LT(a.profile.c[i], 1.0) << a.profile.x[i];
    }
  }
}

TEST(Features, StraddleMonotoneWindows) {
  const auto& a = straddle401();
  ASSERT_EQ(a.windows.size(), 2u);
  const auto& left = a.windows[0];
  const auto& right = a.windows[1];
  EXPECT_LT(a.profile.x[left.last], 1.0);
  EXPECT_TRUE(left.strict_up);
  EXPECT_GT(a.profile.x[right.first], 1.0);
  EXPECT_TRUE(right.strict_down);
  ASSERT_EQ(a.profile.inverses.size(), 2u);
  const std::size_t top = a.profile.terminal_level();
  for (const auto& inv : a.profile.inverses) EXPECT_NEAR(inv.b[top], 1.0, a.surface.grid.max_dx());
  EXPECT_EQ(connectedness_violations(a.profile, left.first, left.last), 0u);
  EXPECT_EQ(connectedness_violations(a.profile, right.first, right.last), 0u);
}

TEST(Features, CancellableSpike) {
  const auto p = cancellable();
  const auto a = analyse(p, 401, 400);
  ASSERT_EQ(a.profile.features.size(), 1u);
  const auto& f = a.profile.features[0];
  EXPECT_EQ(f.kind, FeatureKind::spike);
  EXPECT_EQ(f.location, 1.0);
  EXPECT_LT(f.c_value, p.horizon - 5.0 * a.profile.dt);
  for (std::size_t k = 0; k + 1 < a.surface.levels(); ++k)
    for (std::size_t i = 1; i + 1 < a.surface.nx(); ++i)
      ASSERT_EQ(a.surface.stopped(k, i), i == f.node && k >= a.profile.level[f.node]) << k << " " << i;
}

TEST(Features, FeatureAtomCorrespondence) {
  for (const Analysed* a : {&straddle401(), &put401()})
    for (const auto& f : a->profile.features)
      EXPECT_EQ(a->regions[f.node], f.kind == FeatureKind::bay ? Region::atom_pos : Region::atom_neg);
}

TEST(Monotonicity, PutStrictlyIncreasing) {
  const auto& a = put401();
  ASSERT_EQ(a.windows.size(), 1u);
  const auto& w = a.windows[0];
  EXPECT_TRUE(w.strict_up);
  EXPECT_EQ(w.a_star, w.first);
  EXPECT_TRUE(w.flat_at_zero);  // deep in the money the put is exercised at once
  ASSERT_EQ(a.profile.inverses.size(), 1u);
  const auto& inv = a.profile.inverses[0];
  EXPECT_EQ(inv.direction, Direction::increasing);
  EXPECT_NEAR(inv.b[a.profile.terminal_level()], kPut.kink(), a.surface.grid.max_dx());
}

TEST(Monotonicity, FlatAtZeroUnderHeavyDiscounting) {
  ObstacleProblem p{build_natural_scale(DiffusionSpec::brownian(0.5)), gain_linear(1.0, 0.0), constant(5.0)};
  p.x_min = -1.0;
  p.x_max = 1.0;
  p.horizon = 2.0;
  const auto a = analyse(p, 81, 80);
  // One-step check: continuing one step is worth e^{-r dt} g < g.
  EXPECT_LT(std::exp(-5.0 * a.profile.dt) * 1.0, 1.0);
  for (double c : a.profile.c) EXPECT_EQ(c, 0.0);
  const auto r = check_monotonicity(a.profile, a.regions, 1, 79);
  EXPECT_TRUE(r.flat_at_zero);
  EXPECT_TRUE(r.strict_up);
  EXPECT_TRUE(r.strict_down);
  EXPECT_EQ(r.a_star, 1u);
  EXPECT_EQ(r.b_star, 79u);
}

TEST(Monotonicity, WindowMustBeNeg0) {
  const auto& a = straddle401();
  const std::size_t k = a.profile.features.at(0).node;
  EXPECT_THROW(check_monotonicity(a.profile, a.regions, k - 5, k + 5), PreconditionError);
}

TEST(Inversion, RejectsNonMonotoneProfile) {
  BoundaryProfile p;
  p.x = {0.0, 1.0, 2.0, 3.0};
  p.dt = 0.25;
  p.horizon = 1.0;
  p.level = {0, 2, 1, 3};
  p.c = {0.0, 0.5, 0.25, 0.75};
  EXPECT_THROW(invert_boundary(p, 0, 3, Direction::increasing), InversionError);
  p.level = {0, 1, 2, 3};
  p.c = {0.0, 0.25, 0.5, 0.75};
  const auto inv = invert_boundary(p, 0, 3, Direction::increasing);
  EXPECT_DOUBLE_EQ(inv.b[2], 2.0);
  EXPECT_DOUBLE_EQ(inv.b[4], 3.0);
}

TEST(Boundary, MaskGlitchesBeyondBudgetRejected) {
  ValueSurface s;
  s.grid = make_grid(0.0, 1.0, 21, 1.0, 20);
  s.mask.assign(s.grid.nx() * s.grid.levels(), 0);
  for (std::size_t i = 0; i < s.grid.nx(); ++i) s.mask[s.index(s.levels() - 1, i)] = 1;
  s.mask[s.index(3, 4)] = 1;
  auto p = extract_boundary(s, 0.01);
  EXPECT_EQ(p.repaired, 1u);
  EXPECT_EQ(p.c[4], 1.0);
  for (std::size_t k = 0; k + 1 < s.levels(); k += 2)
    for (std::size_t i = 0; i < s.grid.nx(); ++i) s.mask[s.index(k, i)] = 1;
  EXPECT_THROW(extract_boundary(s), DataQualityError);
}

TEST(SmoothFit, PutProbes) {
  const auto& a = put401();
  const auto& w = a.windows.at(0);
  std::vector<std::size_t> levels;
  for (int j = 1; j <= 5; ++j) levels.push_back(a.surface.grid.nearest_level(j / 6.0));
  const auto rep = smooth_fit_check(a.surface, w.first, w.last + 2, levels);
  EXPECT_EQ(rep.points.size(), 5u);
  EXPECT_GT(rep.s_probes, 0u);
  EXPECT_GT(rep.c_probes, 0u);
  EXPECT_LE(rep.max_abs_dt_inside_s, 1e-8);
  EXPECT_LT(rep.max_dt_inside_c, 0.0);
  for (const auto& pt : rep.points) EXPECT_LE(pt.dx_gap, 10.0 * a.surface.grid.max_dx());
}

TEST(SmoothFit, ContinuationTimeDerivativeMatchesBinomialTheta) {
  const auto& s = put401().surface;
  const double t = 0.5, x = 2.2, h = 0.02;
  const std::size_t k = s.grid.nearest_level(t), i = s.grid.nearest(x);
  ASSERT_FALSE(s.stopped(k, i));
  const double fd = s.dv_dt[s.index(k, i)];
  const double xi = s.grid.x[i];
  const double theta = (put_oracle(t + h, xi) - put_oracle(t - h, xi)) / (2.0 * h);
  EXPECT_LT(fd, -1e-4);
  EXPECT_LT(theta, -1e-4);
  EXPECT_NEAR(fd, theta, 0.1 * std::abs(theta));
}

TEST(Lsc, SmoothProfilesHaveNoViolations) {
  for (const Analysed* a : {&straddle401(), &put401()}) {
    double modulus = 0.0;
    EXPECT_TRUE(lsc_violations(a->profile, &modulus).empty());
    EXPECT_GE(modulus, 0.0);
  }
}
