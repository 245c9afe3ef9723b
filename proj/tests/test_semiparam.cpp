#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "mlabel/datagen.hpp"
#include "mlabel/semiparam.hpp"

using namespace mlabel;

namespace {

ModelSpec model_of(int d, double t, std::vector<LinkSpec> links) {
  ModelSpec model;
  model.theta_star = Eigen::VectorXd::Zero(d);
  model.theta_star(0) = t;
  model.links = std::move(links);
  model.covariates = CovariateDistribution::gaussian(d);
  return model;
}

// projected gradient on increments delta_k in [0, L (x_k - x_{k-1})], g_k = 1/2 + sum_{i<=k} delta_i
std::vector<double> qp_oracle(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w,
                              double L) {
  const std::size_t n = x.size();
  std::vector<double> delta(n, 0.0), upper(n);
  for (std::size_t k = 0; k < n; ++k) upper[k] = L * (x[k] - (k ? x[k - 1] : 0.0));
  double wsum = 0.0;
  for (double v : w) wsum += v;
  const double step = 1.0 / (wsum * static_cast<double>(n));
  auto values = [&] {
    std::vector<double> g(n);
    double acc = 0.5;
    for (std::size_t k = 0; k < n; ++k) g[k] = acc += delta[k];
    return g;
  };
  for (int it = 0; it < 400000; ++it) {
    const std::vector<double> g = values();
    double tail = 0.0;
    for (std::size_t k = n; k-- > 0;) {
      tail += w[k] * (g[k] - y[k]);
      delta[k] = std::clamp(delta[k] - step * tail, 0.0, upper[k]);
    }
  }
  return values();
}

}  // namespace

TEST(Pava, PoolsViolators) {
  const std::vector<double> y{1.0, 3.0, 2.0, 0.0};
  const std::vector<double> w{1.0, 1.0, 1.0, 1.0};
  const std::vector<double> up = detail::pava(y, w, true);
  EXPECT_DOUBLE_EQ(up[0], 1.0);
  EXPECT_DOUBLE_EQ(up[1], 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(up[3], 5.0 / 3.0);
  const std::vector<double> down = detail::pava(y, std::vector<double>{1.0, 1.0, 3.0, 1.0}, false);
  EXPECT_DOUBLE_EQ(down[0], 2.0);
  EXPECT_DOUBLE_EQ(down[1], 2.0);
  EXPECT_DOUBLE_EQ(down[2], 2.0);
  EXPECT_DOUBLE_EQ(down[3], 0.0);
}

TEST(HalfLineFit, MatchesQuadraticProgram) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 6; ++rep) {
    const std::size_t n = 8 + 4 * static_cast<std::size_t>(rep);
    std::vector<double> x(n), y(n), w(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = 0.25 * static_cast<double>(k + 1);
      y[k] = std::clamp(0.5 + 0.3 * x[k] + 0.25 * (u(rng) - 0.5), 0.0, 1.0);
      w[k] = 1.0 + 4.0 * u(rng);
    }
    const double L = rep % 2 ? 0.2 : 1.0;
    const std::vector<double> fit = detail::half_line_fit(x, y, w, L, 1e-12, 200000);
    const std::vector<double> ref = qp_oracle(x, y, w, L);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(fit[k], ref[k], 1e-6) << rep << ":" << k;
  }
}

TEST(FitLinks, ShapeConstraintsHold) {
  const ModelSpec model = model_of(3, 2.0, {LinkSpec::logistic(), LinkSpec::scaled_logistic(3.0)});
  const MultiLabelDataset data = sample_dataset(model, 5000, 4);
  IsotonicFitOptions opts;
  opts.lipschitz = 0.8;
  opts.grid_size = 64;
  const LinkFit fitted = fit_links(model.u_star(), data, opts);
  ASSERT_EQ(fitted.links.size(), 2u);
  for (const LinkSpec& l : fitted.links) {
    const auto g = l.grid();
    const auto v = l.values();
    EXPECT_EQ(g.size(), 65u);
    EXPECT_EQ(l(0.0), 0.5);
    for (std::size_t k = 1; k < g.size(); ++k) {
      EXPECT_GE(v[k], v[k - 1]);
      EXPECT_LE(v[k] - v[k - 1], opts.lipschitz * (g[k] - g[k - 1]) * (1 + 1e-12));
      EXPECT_NEAR(v[k] + v[g.size() - 1 - k], 1.0, 1e-15);
    }
    EXPECT_GE(v.front(), 0.0);
    EXPECT_LE(v.back(), 1.0);
  }
}

TEST(FitLinks, HeldOutErrorIsSmall) {
  const ModelSpec model = model_of(3, 2.0, {LinkSpec::logistic()});
  const MultiLabelDataset data = sample_dataset(model, 20000, 8);
  const LinkFit fitted = fit_links(model.u_star(), data);
  const MultiLabelDataset test = sample_dataset(model, 5000, 9);
  const Eigen::VectorXd margins = test.X * model.u_star();
  std::vector<double> zs(margins.data(), margins.data() + margins.size());
  // the link is fitted as a function of <u, x>; compare with sigma(t* s)
  double s = 0.0;
  for (double z : zs) {
    const double e = fitted.links[0](z) - LinkSpec::logistic()(2.0 * z);
    s += e * e;
  }
  EXPECT_LE(std::sqrt(s / static_cast<double>(zs.size())), 0.05);
  EXPECT_FALSE(fitted.degenerate[0]);
}

TEST(FitLinks, AsymmetricFitAndDegenerateColumn) {
  const ModelSpec model = model_of(2, 1.0, {LinkSpec::logistic()});
  MultiLabelDataset data = sample_dataset(model, 2000, 5);
  data.Y.resize(data.Y.rows(), 2);
  data.Y.col(0) = sample_dataset(model, 2000, 5).Y.col(0);
  data.Y.col(1).setConstant(1);
  IsotonicFitOptions opts;
  opts.enforce_symmetry = false;
  const LinkFit fitted = fit_links(model.u_star(), data, opts);
  EXPECT_FALSE(fitted.degenerate[0]);
  EXPECT_TRUE(fitted.degenerate[1]);
  EXPECT_FALSE(fitted.links[0].symmetric());
  // all-positive labels push the fit to its Lipschitz ceiling on the right half
  EXPECT_GT(fitted.links[1](1.0), 0.9);
}

TEST(FitLinks, AntitoneLabelsGiveFlatFit) {
  const ModelSpec model = model_of(2, 3.0, {LinkSpec::logistic()});
  MultiLabelDataset data = sample_dataset(model, 4000, 6);
  data.Y = -data.Y;
  const LinkFit fitted = fit_links(model.u_star(), data);
  for (double v : fitted.links[0].values()) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST(FitLinks, RejectsBadInput) {
  const ModelSpec model = model_of(2, 1.0, {LinkSpec::logistic()});
  const MultiLabelDataset data = sample_dataset(model, 100, 6);
  EXPECT_THROW(fit_links(Eigen::Vector2d(1, 1), data), InvalidArgument);
  EXPECT_THROW(fit_links(Eigen::Vector3d(1, 0, 0), data), DimensionMismatch);
  IsotonicFitOptions bad;
  bad.lipschitz = 0.0;
  EXPECT_THROW(fit_links(model.u_star(), data, bad), InvalidArgument);
}

TEST(Split, DisjointCoveringDeterministic) {
  const DataSplit a = split_rows(1000, 0.1, 5, 77);
  EXPECT_EQ(a.first.size(), 100u);
  EXPECT_EQ(a.second.size(), 900u);
  std::set<std::size_t> all(a.first.begin(), a.first.end());
  all.insert(a.second.begin(), a.second.end());
  EXPECT_EQ(all.size(), 1000u);
  const DataSplit b = split_rows(1000, 0.1, 5, 77);
  EXPECT_EQ(a.first, b.first);
  EXPECT_NE(a.first, split_rows(1000, 0.1, 5, 78).first);
  EXPECT_THROW(split_rows(50, 0.1, 5, 1), InvalidArgument);
  EXPECT_THROW(split_rows(50, 1.0, 1, 1), InvalidArgument);
}

TEST(Semiparametric, RecoversDirectionAndIsDeterministic) {
  const ModelSpec model = model_of(3, 2.0, {LinkSpec::scaled_logistic(0.7), LinkSpec::scaled_logistic(2.0),
                                            LinkSpec::scaled_logistic(1.2)});
  const MultiLabelDataset data = sample_dataset(model, 10000, 31);
  SemiparamOptions opts;
  opts.seed = 5;
  const SemiparamResult r = semiparametric_fit(data, opts);
  EXPECT_EQ(r.stage1_rows, 1000u);
  EXPECT_EQ(r.stage2_rows, 9000u);
  EXPECT_LT((r.fit.u_hat - model.u_star()).norm(), 0.05);
  const SemiparamResult again = semiparametric_fit(data, opts);
  EXPECT_EQ(r.fit.theta_hat, again.fit.theta_hat);
}

TEST(Crowd, AlphaEstimatesTrackTruth) {
  const ModelSpec model = model_of(3, 1.0, {LinkSpec::scaled_logistic(0.5), LinkSpec::scaled_logistic(1.0),
                                            LinkSpec::scaled_logistic(2.0)});
  const MultiLabelDataset data = sample_dataset(model, 40000, 2);
  const AlphaEstimate a = estimate_alpha(data, model.u_star());
  EXPECT_NEAR(a.alpha(0), 0.5, 0.05);
  EXPECT_NEAR(a.alpha(1), 1.0, 0.07);
  EXPECT_NEAR(a.alpha(2), 2.0, 0.12);
  for (bool f : a.flagged) EXPECT_FALSE(f);

  const CrowdResult r = crowd_pipeline(data, 0.1, 4);
  EXPECT_EQ(r.stage1_rows + r.stage2_rows, data.n());
  EXPECT_LT((r.fit.u_hat - model.u_star()).norm(), 0.05);
}

TEST(Crowd, AlphaFloorAndCapAreFlagged) {
  MultiLabelDataset data;
  data.X.resize(6, 1);
  data.X << -2.0, -1.0, -0.5, 0.5, 1.0, 2.0;
  data.Y.resize(6, 2);
  data.Y << -1, 1, -1, -1, -1, 1, 1, -1, 1, 1, 1, -1;
  const AlphaEstimate a = estimate_alpha(data, Eigen::VectorXd::Ones(1));
  EXPECT_EQ(a.alpha(0), 1e4);
  EXPECT_TRUE(a.flagged[0]);
  EXPECT_EQ(a.alpha(1), 1e-3);
  EXPECT_TRUE(a.flagged[1]);
}

TEST(FitLinks, AntitoneLabelsWithoutSymmetryStayMonotone) {
  const ModelSpec model = model_of(2, 3.0, {LinkSpec::logistic()});
  MultiLabelDataset data = sample_dataset(model, 4000, 16);
  data.Y = -data.Y;
  IsotonicFitOptions opts;
  opts.enforce_symmetry = false;
  const LinkFit fitted = fit_links(model.u_star(), data, opts);
  const auto v = fitted.links[0].values();
  for (std::size_t k = 1; k < v.size(); ++k) EXPECT_GE(v[k], v[k - 1]);
}

TEST(Crowd, EqualAlphaKeepsMultiLabelDirection) {
  const ModelSpec model = model_of(3, 1.0, std::vector<LinkSpec>(4, LinkSpec::scaled_logistic(1.7)));
  const MultiLabelDataset data = sample_dataset(model, 3000, 17);
  const FitResult a = crowdsourced_fit(data, Eigen::VectorXd::Constant(4, 2.5));
  const FitResult b = fit(LossSpec::multi_label(), data);
  EXPECT_LT((a.u_hat - b.u_hat).norm(), 1e-9);
  EXPECT_NEAR(a.theta_hat.norm() * 2.5, b.theta_hat.norm(), 1e-8);
}
