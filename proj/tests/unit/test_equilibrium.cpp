#include <cmath>

#include <gtest/gtest.h>

#include "lineagelab/equilibrium.hpp"

using namespace lineagelab;

namespace {

ModelParams diffusive_case() {
  ModelParams p;
  p.beta = 1.0;
  p.mu0 = 0.0;
  p.selection = SelectionSpec::quadratic(1.0);
  p.sigma = 0.1;
  p.c = 0.01;
  return p;
}

}  // namespace

TEST(Oracle, ClosedFormValues) {
  const auto o = gaussian_quadratic_oracle(1.0, 0.1, 0.01);
  EXPECT_NEAR(o.lambda, 0.945, 1e-12);
  EXPECT_NEAR(o.mean, -0.1, 1e-12);
  EXPECT_NEAR(o.variance, 0.1, 1e-12);
  EXPECT_NEAR(critical_speed_quadratic(2.0, 0.1), 0.2777977193485465, 1e-12);
}

TEST(Equilibrium, DiffusiveSolverMatchesGaussianOracle) {
  const ModelParams p = diffusive_case();
  const Grid g(-3.0, 3.0, 1201);
  const auto eq = solve_equilibrium_diffusive(p, g);
  EXPECT_NEAR(eq.lambda, 0.945, 1e-3 * 0.945);
  const Field oracle = gaussian_oracle_field(g, p);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(eq.F[i] - oracle[i]));
  EXPECT_LE(worst / oracle.max_abs(), 1e-3);
  EXPECT_LE(eq.residual, 1e-10);
  EXPECT_FALSE(eq.extinct);
}

TEST(Equilibrium, NormalizationFixesTheMass) {
  ModelParams p = diffusive_case();
  p.mu0 = 0.3;
  const auto eq = solve_equilibrium(p, Grid(-3.0, 3.0, 601));
  EXPECT_NEAR((p.beta - p.mu0) * integrate(eq.F), eq.lambda, 1e-12);
  EXPECT_NEAR(eq.mu_bar, p.beta - eq.lambda, 1e-14);
  EXPECT_LE(eq.lambda_consistency, 1e-3);
  for (double v : eq.F.values) EXPECT_GE(v, 0.0);
}

TEST(Equilibrium, LambdaConsistencyOnMovingOptimumParameters) {
  ModelParams p;
  p.beta = 2.0;
  p.mu0 = 1.0;
  p.selection = SelectionSpec::quadratic(2.0);
  p.sigma = 0.1;
  p.c = 0.2;
  const auto eq = solve_equilibrium(p, Grid(-3.0, 3.0, 2401));
  EXPECT_GT(eq.lambda, 0.0);
  EXPECT_LE(std::abs(eq.lambda_mass - eq.lambda_mean_fitness) / eq.lambda_mass, 1e-3);
  EXPECT_LT(dominant_trait(eq.F), -0.8);
}

TEST(Equilibrium, ReflectionMapsSpeedToMinusSpeed) {
  ModelParams p = diffusive_case();
  p.c = 0.05;
  const Grid g(-2.0, 2.0, 401);
  const auto a = solve_equilibrium(p, g);
  p.c = -0.05;
  const auto b = solve_equilibrium(p, g);
  EXPECT_NEAR(a.lambda, b.lambda, 1e-12);
  const Field r = b.F.reflected();
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(a.F[i], r[i], 1e-8 * a.F.max_abs());
}

TEST(Equilibrium, UniformKernelAndCoshSelectionConverge) {
  ModelParams p;
  p.beta = 2.0;
  p.mu0 = 0.5;
  p.kernel = KernelSpec::uniform();
  p.selection = SelectionSpec::cosh_minus_one(1.5);
  p.sigma = 0.1;
  p.c = 0.1;
  const auto eq = solve_equilibrium(p, Grid(-3.0, 3.0, 601));
  EXPECT_LE(eq.residual, 1e-10);
  EXPECT_GT(eq.lambda, 0.0);
  EXPECT_LE(eq.lambda_consistency, 1e-3);
}

TEST(Equilibrium, FastOptimumFlagsExtinction) {
  ModelParams p = diffusive_case();
  p.beta = 2.0;
  p.c = 0.6;
  const auto eq = solve_equilibrium_diffusive(p, Grid(-4.0, 4.0, 801));
  EXPECT_LE(eq.lambda, 0.0);
  EXPECT_TRUE(eq.extinct);
}

TEST(Equilibrium, InvalidModelIsRejected) {
  ModelParams p = diffusive_case();
  p.mu0 = 2.0;
  EXPECT_THROW(solve_equilibrium(p, Grid(-1.0, 1.0, 101)), ConfigError);
}

TEST(Equilibrium, IterationCapReportsNoConvergence) {
  const ModelParams p = diffusive_case();
  SolverOptions opt;
  opt.max_iter = 1;
  EXPECT_THROW(solve_equilibrium(p, Grid(-3.0, 3.0, 601), opt), Error);
}

TEST(Equilibrium, LambdaDecreasesWithSpeed) {
  ModelParams p = diffusive_case();
  p.beta = 2.0;
  const Grid g(-3.0, 3.0, 601);
  double prev = INFINITY;
  for (double c : {0.0, 0.1, 0.2, 0.3}) {
    p.c = c;
    const double l = solve_equilibrium_diffusive(p, g).lambda;
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(PrincipalEigenpair, SmallMetzlerMatrix) {
  BandedMatrix m(3, 1, 1);
  m.at(0, 0) = -1.0;
  m.at(0, 1) = 1.0;
  m.at(1, 0) = 1.0;
  m.at(1, 1) = -1.0;
  m.at(1, 2) = 1.0;
  m.at(2, 1) = 1.0;
  m.at(2, 2) = -1.0;
  const auto ep = principal_eigenpair(m, {1.0, 1.0, 1.0}, 1e-12, 1000);
  EXPECT_NEAR(ep.lambda, -1.0 + std::sqrt(2.0), 1e-10);
  EXPECT_NEAR(ep.vector[1] / ep.vector[0], std::sqrt(2.0), 1e-8);
}
