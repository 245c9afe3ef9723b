#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mlabel/covariates.hpp"
#include "mlabel/link.hpp"
#include "mlabel/model.hpp"

using namespace mlabel;

namespace {

LinkSpec kinked_link() {
  // symmetric, piecewise linear, Lipschitz 0.5
  return LinkSpec::tabulated({-2.0, -0.5, 0.0, 0.5, 2.0}, {0.1, 0.35, 0.5, 0.65, 0.9}, 0.5, true);
}

}  // namespace

TEST(Link, LogisticValues) {
  const LinkSpec l = LinkSpec::logistic();
  EXPECT_EQ(l(0.0), 0.5);
  EXPECT_DOUBLE_EQ(l(50.0), 1.0);
  EXPECT_DOUBLE_EQ(l(-800.0) + 1.0, 1.0);
  EXPECT_DOUBLE_EQ(LinkSpec::scaled_logistic(2.0)(1.0), 1.0 / (1.0 + std::exp(-2.0)));
}

TEST(Link, Derivatives) {
  EXPECT_DOUBLE_EQ(link_derivative(LinkSpec::logistic(), 0.0), 0.25);
  EXPECT_DOUBLE_EQ(link_derivative(LinkSpec::scaled_logistic(3.0), 0.0), 0.75);
  const LinkSpec l = LinkSpec::logistic();
  const double h = 1e-5;
  EXPECT_NEAR(l.derivative(0.7), (l(0.7 + h) - l(0.7 - h)) / (2 * h), 1e-6);
  const LinkSpec k = kinked_link();
  EXPECT_DOUBLE_EQ(k.derivative(1.0), 0.25 / 1.5);
  EXPECT_DOUBLE_EQ(k.derivative(0.0), 0.3);  // right slope at a knot
  EXPECT_EQ(k.derivative(3.0), 0.0);
}

TEST(Link, TabulatedInterpolatesAndClamps) {
  const LinkSpec k = kinked_link();
  EXPECT_EQ(k(0.0), 0.5);
  EXPECT_DOUBLE_EQ(k(0.25), 0.575);
  EXPECT_EQ(k(10.0), 0.9);
  EXPECT_EQ(k(-10.0), 0.1);
}

TEST(Link, TabulatedValidation) {
  EXPECT_THROW(LinkSpec::tabulated({-1, 0, 1}, {0.6, 0.5, 0.7}, 1.0, false), InvalidArgument);
  EXPECT_THROW(LinkSpec::tabulated({-1, 0, 1}, {0.2, 0.5, 0.8}, 0.1, false), InvalidArgument);
  EXPECT_THROW(LinkSpec::tabulated({-1, 0, 1}, {0.2, 0.4, 0.8}, 1.0, false), InvalidArgument);
  EXPECT_THROW(LinkSpec::tabulated({-1, 0, 1}, {0.2, 0.5, 0.7}, 1.0, true), InvalidArgument);
  EXPECT_THROW(LinkSpec::tabulated({0, 1}, {0.5, 1.2}, 2.0, false), InvalidArgument);
  EXPECT_THROW(LinkSpec::scaled_logistic(0.0), InvalidArgument);
}

TEST(Link, PrimitiveMatchesTrapezoid) {
  const LinkSpec k = kinked_link();
  // integral of a piecewise-linear function is exact under the trapezoid rule on its knots
  const double expected = 0.5 * 0.5 * (0.5 + 0.65) + 0.5 * 1.0 * (0.65 + 0.65 + 0.25 / 1.5 * 1.0);
  EXPECT_NEAR(k.primitive(1.5), expected, 1e-14);
  EXPECT_NEAR(k.primitive(3.0), k.primitive(2.0) + 0.9, 1e-14);
  EXPECT_NEAR(k.primitive(-1.0), -(0.5 * 0.5 * (0.5 + 0.35) + 0.25 * (0.35 + 0.35 - 0.25 / 1.5 * 0.5)), 1e-14);
  EXPECT_EQ(LinkSpec::logistic().primitive(0.0), 0.0);
}

TEST(Link, SymmetryAndMonotonicity) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  const LinkSpec links[] = {LinkSpec::logistic(), LinkSpec::scaled_logistic(0.3), kinked_link()};
  for (const auto& l : links) {
    for (int k = 0; k < 1000; ++k) {
      const double t = n(rng);
      EXPECT_LE(std::abs(l(t) + l(-t) - 1.0), 1e-12);
      const double s = t + std::abs(n(rng));
      EXPECT_LE(l(t), l(s));
    }
  }
}

TEST(Link, FiniteDifferencesAwayFromKnots) {
  const LinkSpec k = kinked_link();
  const double h = 1e-5;
  for (double t : {-1.7, -0.3, 0.2, 1.1, 2.5})
    EXPECT_NEAR(k.derivative(t), (k(t + h) - k(t - h)) / (2 * h), 1e-6);
}

TEST(Covariates, BetaRegularDensityNearZero) {
  for (double beta : {0.5, 1.0, 2.0}) {
    const auto dist = CovariateDistribution::beta_regular(3, beta, Eigen::Vector3d(1, 0, 0));
    const double z = 1e-3;
    const double scaled = std::pow(z, 1.0 - beta) * dist.abs_density(z);
    EXPECT_NEAR(scaled / dist.c_z(), 1.0, 0.01) << beta;
    EXPECT_NEAR(dist.c_z(), 1.0 / std::tgamma(beta), 1e-15);
  }
  EXPECT_NEAR(CovariateDistribution::gaussian(2).c_z(), std::sqrt(2.0 / M_PI), 1e-15);
  EXPECT_THROW(CovariateDistribution::beta_regular(2, 0.0, Eigen::Vector2d(1, 0)), InvalidArgument);
}

TEST(Model, Validation) {
  ModelSpec m;
  m.theta_star = Eigen::Vector3d(0, 2, 0);
  m.links = {LinkSpec::logistic()};
  m.covariates = CovariateDistribution::gaussian(3);
  EXPECT_NO_THROW(m.validate());
  EXPECT_DOUBLE_EQ(m.t_star(), 2.0);
  EXPECT_THROW(m.require_unit_norm(), InvalidArgument);
  m.covariates = CovariateDistribution::beta_regular(3, 1.0, Eigen::Vector3d(1, 0, 0));
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.covariates = CovariateDistribution::gaussian(2);
  EXPECT_THROW(m.validate(), DimensionMismatch);
  m.covariates = CovariateDistribution::gaussian(3);
  m.links.clear();
  EXPECT_THROW(m.validate(), InvalidArgument);
}
