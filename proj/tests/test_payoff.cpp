#include <gtest/gtest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <random>

#include "freebound/diffusion.hpp"
#include "freebound/payoff.hpp"

using namespace freebound;

namespace {

const RealFn kZero = [](double) { return 0.0; };

RealFn constant(double c) {
  return [c](double) { return c; };
}

}  // namespace

TEST(Gain, StraddleAtom) {
  const auto g = gain_straddle(1.0);
  ASSERT_EQ(g.atoms().size(), 1u);
  EXPECT_EQ(g.atoms()[0].location, 1.0);
  EXPECT_EQ(g.atoms()[0].mass, 2.0);
  EXPECT_EQ(g.left_deriv(1.0), -1.0);
  EXPECT_EQ(g.right_deriv(1.0), 1.0);
  EXPECT_EQ(g(0.25), 0.75);
  // The jump of the left derivative across the atom is the atom mass.
  EXPECT_DOUBLE_EQ(g.left_deriv(1.0 + 1e-9) - g.left_deriv(1.0), 2.0);
}

TEST(Gain, LinearHasNoSingularPart) {
  const auto g = gain_linear(0.5, 1.0);
  EXPECT_TRUE(g.atoms().empty());
  for (double x : {-3.0, 0.0, 2.0}) {
    EXPECT_EQ(g.left_deriv(x), 1.0);
    EXPECT_EQ(g.second_density(x), 0.0);
  }
}

TEST(Gain, TransformedPutAtom) {
  for (double d : {0.5, -1.0, 0.3}) {
    const TransformedPut tp{1.0, d};
    const auto g = gain_transformed_put(tp);
    const double kbar = tp.kink();
    ASSERT_EQ(g.atoms().size(), 1u);
    EXPECT_NEAR(g.atoms()[0].location, kbar, 1e-14);
    EXPECT_NEAR(g.atoms()[0].mass, std::pow(kbar, d / (1.0 - d)) / (1.0 - d), 1e-12);
    EXPECT_NEAR(g(kbar), 0.0, 1e-12);
  }
  const TransformedPut half{1.0, 0.5};
  EXPECT_DOUBLE_EQ(half.kink(), 2.0);
  EXPECT_DOUBLE_EQ(half.value_scale(), 0.25);
  EXPECT_NEAR(gain_transformed_put(half).atoms()[0].mass, 4.0, 1e-14);
  EXPECT_THROW(gain_transformed_put({1.0, 1.0}), ConstructionError);
}

TEST(Gain, InconsistentSlopesRejected) {
  EXPECT_THROW(gain_from_kinks({affine_piece(1.0, -1.0), affine_piece(-1.0, 1.0)}, {{1.0, -1.0, 2.0}}),
               ConstructionError);
  EXPECT_THROW(gain_from_kinks({affine_piece(1.0, -1.0), affine_piece(0.0, 1.0)}, {{1.0, -1.0, 1.0}}),
               ConstructionError);
  EXPECT_THROW(gain_from_kinks({affine_piece(1.0, -1.0)}, {{1.0, -1.0, 1.0}}), ConstructionError);
}

TEST(Gain, SecondMeasureMatchesDerivativeIncrements) {
  const auto put = gain_transformed_put({1.0, 0.5});
  const auto straddle = gain_straddle(1.0);
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.3, 3.5);
  for (int i = 0; i < 50; ++i) {
    double a = u(gen), b = u(gen);
    if (a > b) std::swap(a, b);
    EXPECT_NEAR(put.second_measure(a, b), put.left_deriv(b) - put.left_deriv(a), 1e-8);
    EXPECT_NEAR(straddle.second_measure(a, b), straddle.left_deriv(b) - straddle.left_deriv(a), 1e-8);
  }
  EXPECT_NEAR(straddle.second_measure(1.0, 1.5), 2.0, 1e-14);
  EXPECT_NEAR(straddle.second_measure(0.5, 1.0), 0.0, 1e-14);
}

TEST(Measure, StraddleUnderGbm) {
  const double r = 0.05, vol = 0.3;
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(0.0, vol));
  const auto g = gain_straddle(1.0);
  const auto mu = build_measure(g, diff, constant(r), std::nullopt, {0.2, 3.4});
  for (double z : {0.3, 0.9, 1.1, 2.5})
    EXPECT_NEAR(mu.density(z), -2.0 * r * std::abs(z - 1.0) / (vol * vol * z * z), 1e-14);
  ASSERT_EQ(mu.atoms.size(), 1u);
  EXPECT_EQ(mu.atoms[0].location, g.atoms()[0].location);
  EXPECT_EQ(mu.atoms[0].mass, g.atoms()[0].mass);
}

TEST(Measure, TransformedPutDensity) {
  const double r = 0.04, vol = 0.4, d = 0.5;
  const TransformedPut tp{1.0, d};
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(r, vol));
  const auto mu = build_measure(gain_transformed_put(tp), diff, constant(r), std::nullopt, {0.4, 4.4});
  const double kp = tp.strike_prime();
  for (double z : {0.5, 1.0, 1.9})
    EXPECT_NEAR(mu.density(z), -d * kp / ((1.0 - d) * (1.0 - d) * z * z), 1e-12) << z;
  for (double z : {2.1, 4.0}) EXPECT_EQ(mu.density(z), 0.0);
}

TEST(Measure, DiscountFreeConvexGainIsNonNegative) {
  const auto diff = build_natural_scale(DiffusionSpec::brownian());
  SmoothPiece sq{[](double x) { return x * x; }, [](double x) { return 2.0 * x; }, [](double) { return 2.0; }};
  const auto mu = build_measure(ConvexDiffGain({sq}, {}), diff, kZero, std::nullopt, {-3.0, 3.0});
  EXPECT_TRUE(mu.atoms.empty());
  for (double z : {-2.0, 0.0, 1.5}) EXPECT_EQ(mu.density(z), 2.0);
}

TEST(Measure, NegativeRateRejected) {
  const auto diff = build_natural_scale(DiffusionSpec::brownian());
  EXPECT_THROW(build_measure(gain_straddle(0.0), diff, [](double x) { return x > 0.5 ? -0.01 : 0.0; }, std::nullopt,
                             {-1.0, 1.0}),
               DomainError);
}

TEST(Measure, FundamentalTheoremOnRandomIntervals) {
  const double r = 0.05, vol = 0.3, h = 0.1;
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(0.0, vol));
  const auto g = gain_straddle(1.0);
  const auto mu = build_measure(g, diff, constant(r), constant(h), {0.2, 3.4});
  boost::math::quadrature::tanh_sinh<double> ts;
  auto source = [&](double z) { return 2.0 * (h - r * g(z)) / (vol * vol * z * z); };
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(0.25, 3.3);
  for (int i = 0; i < 100; ++i) {
    double a = u(gen), b = u(gen);
    if (a > b) std::swap(a, b);
    if (i == 0) a = 1.0;  // interval starting on the atom
    double q = 0.0;
    if (a < 1.0 && b > 1.0) q = ts.integrate(source, a, 1.0) + ts.integrate(source, 1.0, b);
    else q = ts.integrate(source, a, b);
    EXPECT_NEAR(mu.measure(a, b), g.left_deriv(b) - g.left_deriv(a) + q, 1e-6) << a << " " << b;
  }
}

TEST(Measure, Additivity) {
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(0.0, 0.3));
  const auto mu = build_measure(gain_straddle(1.0), diff, constant(0.05), std::nullopt, {0.2, 3.4});
  EXPECT_NEAR(mu.measure(0.3, 1.0) + mu.measure(1.0, 2.0), mu.measure(0.3, 2.0), 1e-12);
}

TEST(Regions, Straddle) {
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(0.0, 0.3));
  const auto mu = build_measure(gain_straddle(1.0), diff, constant(0.05), std::nullopt, {0.2, 3.4});
  std::vector<double> nodes;
  for (int i = 0; i <= 64; ++i) nodes.push_back(0.2 + 0.05 * i);
  nodes[16] = 1.0;  // atoms sit exactly on nodes, as the grid builder guarantees
  const auto lab = classify_regions(mu, nodes, 0.05);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (std::abs(nodes[i] - 1.0) < 1e-12) EXPECT_EQ(lab[i], Region::atom_pos);
    else EXPECT_EQ(lab[i], Region::neg0) << nodes[i];
  }
}

TEST(Regions, TransformedPut) {
  const auto diff = build_natural_scale(DiffusionSpec::geometric_brownian(0.04, 0.4));
  const auto mu =
      build_measure(gain_transformed_put({1.0, 0.5}), diff, constant(0.04), std::nullopt, {0.4, 4.4});
  std::vector<double> nodes;
  for (int i = 0; i <= 80; ++i) nodes.push_back(0.4 + 0.05 * i);
  nodes[32] = 2.0;
  const auto lab = classify_regions(mu, nodes, 0.05);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double x = nodes[i];
    if (std::abs(x - 2.0) < 1e-9) {
      EXPECT_EQ(lab[i], Region::atom_pos);
    } else if (x < 1.9) {
      EXPECT_EQ(lab[i], Region::neg0) << x;
    } else if (x > 2.1) {
      EXPECT_EQ(lab[i], Region::null) << x;
    }
  }
}

TEST(Regions, PositiveDensity) {
  SignedMeasure mu{[](double z) { return 1.0 + z * z; }, {}, {-1.0, 1.0}};
  std::vector<double> nodes;
  for (int i = 1; i < 20; ++i) nodes.push_back(-1.0 + 0.1 * i);
  for (Region r : classify_regions(mu, nodes, 0.1)) EXPECT_EQ(r, Region::pos0);
}

TEST(Regions, StableUnderRefinement) {
  // density changes sign at z = 0.3
  SignedMeasure mu{[](double z) { return z - 0.3; }, {{-0.5, -1.0}}, {-1.0, 1.0}};
  std::vector<double> coarse, fine;
  for (int i = 0; i <= 40; ++i) coarse.push_back(-1.0 + 0.05 * i);
  for (int i = 0; i <= 80; ++i) fine.push_back(-1.0 + 0.025 * i);
  const auto lc = classify_regions(mu, coarse, 0.05);
  const auto lf = classify_regions(mu, fine, 0.025);
  for (std::size_t i = 1; i + 1 < coarse.size(); ++i) {
    if (std::abs(coarse[i] - 0.3) < 0.11) continue;
    EXPECT_EQ(lc[i], lf[2 * i]) << coarse[i];
  }
  EXPECT_EQ(lc[10], Region::atom_neg);
}
