#include <cmath>
#include <cstdint>
#include <vector>

#include <gtest/gtest.h>

#include "mlabel/datagen.hpp"

using namespace mlabel;

TEST(Datagen, GaussianMoments) {
  const Eigen::MatrixXd X = sample_covariates(CovariateDistribution::gaussian(3), 100000, 7);
  const Eigen::RowVectorXd mean = X.colwise().mean();
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(mean(k)), 0.02);
  const Eigen::MatrixXd C = (X.rowwise() - mean).transpose() * (X.rowwise() - mean) / (X.rows() - 1.0);
  EXPECT_LT((C - Eigen::Matrix3d::Identity()).norm(), 0.05);
}

TEST(Datagen, BetaRegularProjection) {
  const auto dist = CovariateDistribution::beta_regular(3, 1.0, Eigen::Vector3d(1, 0, 0));
  const Eigen::MatrixXd X = sample_covariates(dist, 100000, 9);
  EXPECT_NEAR(X.col(0).cwiseAbs().mean(), 1.0, 0.02);
  EXPECT_NEAR(X.col(1).squaredNorm() / X.rows(), 1.0, 0.02);
}

TEST(Datagen, Deterministic) {
  const auto dist = CovariateDistribution::gaussian(4);
  EXPECT_EQ(sample_covariates(dist, 50, 11), sample_covariates(dist, 50, 11));
  EXPECT_NE(sample_covariates(dist, 50, 11), sample_covariates(dist, 50, 12));
  EXPECT_THROW(sample_covariates(dist, 0, 1), InvalidArgument);
}

TEST(Datagen, ZeroThetaGivesFairLabels) {
  ModelSpec m;
  m.theta_star = Eigen::Vector2d::Zero();
  m.links.assign(10, LinkSpec::logistic());
  m.covariates = CovariateDistribution::gaussian(2);
  const Eigen::MatrixXd X = sample_covariates(m.covariates, 100000, 1);
  const LabelMatrix Y = sample_labels(m, X, 2);
  const double freq = (Y.cast<double>().array() > 0).cast<double>().mean();
  EXPECT_NEAR(freq, 0.5, 0.002);
}

TEST(Datagen, LabelFrequencyMatchesLink) {
  ModelSpec m;
  m.theta_star = Eigen::Vector2d(2.0, 0.0);
  m.links = {LinkSpec::logistic()};
  m.covariates = CovariateDistribution::gaussian(2);
  Eigen::MatrixXd X(100000, 2);
  X.col(0).setOnes();
  X.col(1).setZero();
  const LabelMatrix Y = sample_labels(m, X, 5);
  const double freq = (Y.cast<double>().array() > 0).cast<double>().mean();
  EXPECT_NEAR(freq, 1.0 / (1.0 + std::exp(-2.0)), 0.005);
}

TEST(Datagen, LabelFrequencyOrderedInAlpha) {
  ModelSpec m;
  m.theta_star = Eigen::Vector2d(1.0, 0.0);
  m.links = {LinkSpec::scaled_logistic(1), LinkSpec::scaled_logistic(2), LinkSpec::scaled_logistic(4)};
  m.covariates = CovariateDistribution::gaussian(2);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(20000, 2);
  X.col(0).setConstant(0.5);
  const LabelMatrix Y = sample_labels(m, X, 3);
  const Eigen::RowVectorXd f = (Y.cast<double>().array() > 0).cast<double>().colwise().mean();
  EXPECT_LT(f(0), f(1));
  EXPECT_LT(f(1), f(2));
}

TEST(Datagen, BinnedFrequenciesWithinBinomialBounds) {
  ModelSpec m;
  m.theta_star = Eigen::Vector2d(1.5, 0.0);
  m.links = {LinkSpec::logistic()};
  m.covariates = CovariateDistribution::gaussian(2);
  const MultiLabelDataset data = sample_dataset(m, 200000, 21);
  const Eigen::VectorXd margins = data.X * m.theta_star;
  std::vector<double> pos(8, 0.0), cnt(8, 0.0), expected(8, 0.0);
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const int b = static_cast<int>(std::floor(margins(i) + 4.0));
    if (b < 0 || b >= 8) continue;
    pos[static_cast<std::size_t>(b)] += data.Y(i, 0) > 0;
    cnt[static_cast<std::size_t>(b)] += 1;
    expected[static_cast<std::size_t>(b)] += m.links[0](margins(i));
  }
  for (std::size_t b = 0; b < 8; ++b) {
    if (cnt[b] < 100) continue;
    const double p = expected[b] / cnt[b];
    const double se = std::sqrt(p * (1 - p) / cnt[b]);
    EXPECT_LT(std::abs(pos[b] / cnt[b] - p), 5 * se) << b;
  }
}

TEST(Datagen, MajorityVote) {
  const std::vector<std::int8_t> a{1, 1, -1};
  EXPECT_EQ(majority_vote(a, 0), 1);
  const std::vector<std::int8_t> b{-1};
  EXPECT_EQ(majority_vote(b, 0), -1);
  const std::vector<std::int8_t> perm{-1, 1, 1};
  EXPECT_EQ(majority_vote(perm, 99), majority_vote(a, 5));
  const std::vector<std::int8_t> tie{1, -1};
  int plus = 0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) plus += majority_vote(tie, stream_seed(4, static_cast<std::uint64_t>(k), Stream::TieBreak)) > 0;
  EXPECT_NEAR(plus / double(draws), 0.5, 0.005);
  EXPECT_THROW(majority_vote(std::vector<std::int8_t>{}, 0), InvalidArgument);
}
