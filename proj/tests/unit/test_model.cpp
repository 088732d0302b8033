#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lineagelab/field.hpp"
#include "lineagelab/model.hpp"

using namespace lineagelab;

TEST(Selection, QuadraticValuesAndSlope) {
  const auto s = SelectionSpec::quadratic(2.0);
  EXPECT_DOUBLE_EQ(s.m(0.0), 0.0);
  EXPECT_DOUBLE_EQ(s.m(0.5), 0.25);
  EXPECT_DOUBLE_EQ(s.dm(-0.5), -1.0);
  EXPECT_DOUBLE_EQ(s.curvature_at_optimum(), 2.0);
}

TEST(Selection, EvenAndConvexForEveryKind) {
  for (const auto& s : {SelectionSpec::quadratic(1.5), SelectionSpec::power(4), SelectionSpec::cosh_minus_one(2.0)}) {
    for (double z : {0.1, 0.7, 1.9}) {
      EXPECT_DOUBLE_EQ(s.m(z), s.m(-z)) << s.name();
      const double h = 1e-3;
      EXPECT_GE(s.m(z + h) - 2.0 * s.m(z) + s.m(z - h), -1e-14) << s.name();
      EXPECT_NEAR(s.dm(z), (s.m(z + h) - s.m(z - h)) / (2.0 * h), 1e-5 * (1.0 + std::abs(s.dm(z)))) << s.name();
    }
  }
}

TEST(Kernel, GaussianAndUniformAreStandardized) {
  for (const auto& k : {KernelSpec::gaussian(), KernelSpec::uniform()}) {
    EXPECT_NEAR(detail::kernel_moment(k, 0), 1.0, 1e-10) << k.name();
    EXPECT_NEAR(detail::kernel_moment(k, 1), 0.0, 1e-12) << k.name();
    EXPECT_NEAR(detail::kernel_moment(k, 2), 1.0, 1e-9) << k.name();
  }
}

TEST(Kernel, MassMatchesTailsAndIsSymmetric) {
  const auto g = KernelSpec::gaussian();
  EXPECT_NEAR(g.mass(-1.0, 1.0), 0.6826894921370859, 1e-14);
  EXPECT_NEAR(g.mass(-3.0, -1.0), g.mass(1.0, 3.0), 1e-16);
  EXPECT_NEAR(g.upper_tail(7.0), 1.279812543885835e-12, 1e-24);
  const auto u = KernelSpec::uniform();
  EXPECT_DOUBLE_EQ(u.mass(-10.0, 10.0), 1.0);
  EXPECT_NEAR(u.mass(0.0, 1.0), 1.0 / (2.0 * kSqrt3), 1e-15);
}

TEST(Kernel, SamplesHaveUnitVariance) {
  std::mt19937_64 rng(3);
  for (const auto& k : {KernelSpec::gaussian(), KernelSpec::uniform()}) {
    double s1 = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double h = k.sample(rng);
      s1 += h;
      s2 += h * h;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
  }
}

TEST(Grid, PlacesZeroOnANode) {
  const Grid g(-3.0, 3.0, 1201);
  EXPECT_DOUBLE_EQ(g.dz(), 0.005);
  EXPECT_EQ(g.zero_index(), 600u);
  EXPECT_DOUBLE_EQ(g.z(600), 0.0);
  EXPECT_TRUE(g.symmetric());
  EXPECT_EQ(g.index_of(-0.1), 580u);
  EXPECT_EQ(g.index_of(-100.0), 0u);
  EXPECT_EQ(g.index_of(100.0), 1200u);
}

TEST(Grid, RejectsBadBounds) {
  EXPECT_THROW(Grid(0.5, 3.0, 11), ConfigError);
  EXPECT_THROW(Grid(-1.0, 1.0, 2), ConfigError);
  EXPECT_THROW(Grid(-1.0, 2.0, 5), ConfigError);  // 0 falls between nodes
  try {
    Grid(-1.0, 1.0, 2);
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "grid.n");
  }
}

TEST(Grid, AsymmetricGridReflects) {
  const Grid g(-3.5, 2.5, 601);
  const Grid r = g.reflected();
  EXPECT_DOUBLE_EQ(r.z_min(), -2.5);
  EXPECT_DOUBLE_EQ(r.z_max(), 3.5);
  EXPECT_DOUBLE_EQ(r.dz(), g.dz());
  EXPECT_FALSE(g.symmetric());
}

TEST(Validate, AcceptsMovingOptimumParameters) {
  ModelParams p;
  p.beta = 2.0;
  p.mu0 = 1.0;
  p.selection = SelectionSpec::quadratic(2.0);
  p.sigma = 0.1;
  p.c = 0.2;
  EXPECT_TRUE(validate(p).ok());
}

TEST(Validate, RejectsBetaNotAboveMu0) {
  ModelParams p;
  p.beta = 1.0;
  p.mu0 = 1.0;
  const auto r = validate(p);
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.failures().front(), "beta > mu0 violated");
}

TEST(Validate, RejectsOddPowerAndBadSigma) {
  ModelParams p;
  p.selection = SelectionSpec::power(3);
  EXPECT_FALSE(validate(p).ok());
  p.selection = SelectionSpec::quadratic(1.0);
  p.sigma = 0.0;
  EXPECT_FALSE(validate(p).ok());
}

TEST(Field, TrapezoidMomentsOfAGaussian) {
  const Grid g(-3.0, 3.0, 1201);
  const double v = 0.1, m = -0.2;
  const Field f = Field::from_function(g, [&](double z) {
    return std::exp(-(z - m) * (z - m) / (2 * v)) / std::sqrt(2 * M_PI * v);
  });
  const auto mo = moments(f);
  EXPECT_NEAR(mo.mass, 1.0, 1e-10);
  EXPECT_NEAR(mo.mean, m, 1e-10);
  EXPECT_NEAR(mo.variance, v, 1e-8);
  EXPECT_NEAR(f.reflected().interpolate(0.2), f.interpolate(-0.2), 1e-12);
}

TEST(Field, PositivityWindowAndDegenerateInput) {
  const Grid g(-1.0, 1.0, 201);
  const Field f = Field::from_function(g, [](double z) { return std::abs(z) < 0.5 ? 1.0 : 0.0; });
  const Window w = positivity_window(f);
  EXPECT_DOUBLE_EQ(g.z(w.lo), -0.49);
  EXPECT_DOUBLE_EQ(g.z(w.hi), 0.49);
  EXPECT_THROW(positivity_window(Field(g)), Error);
}
