#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/covariates.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/model.hpp"
#include "mlabel/rng.hpp"

namespace mlabel {

/// n i.i.d. rows from `dist`; deterministic in `seed`.
inline Eigen::MatrixXd sample_covariates(const CovariateDistribution& dist, std::size_t n,
                                         std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_covariates needs n >= 1");
  const int d = dist.dim();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), d);
  Rng rng = make_rng(seed, 0, Stream::Covariates);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (dist.is_gaussian()) {
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (int k = 0; k < d; ++k) X(i, k) = normal(rng);
    return X;
  }
  const Eigen::VectorXd& u = *dist.direction();
  std::gamma_distribution<double> gamma(dist.beta(), 1.0);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd w(d);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double magnitude = gamma(rng);
    const double z = coin(rng) ? magnitude : -magnitude;
    for (int k = 0; k < d; ++k) w(k) = normal(rng);
    w -= u * u.dot(w);
    X.row(i) = (z * u + w).transpose();
  }
  return X;
}

/// Y_ij = +1 with probability sigma_j(<theta*, X_i>), independently given X.
inline LabelMatrix sample_labels(const ModelSpec& model, const Eigen::MatrixXd& X,
                                 std::uint64_t seed) {
  if (X.cols() != model.theta_star.size())
    throw DimensionMismatch("X column count differs from model dimension");
  const int m = model.m();
  LabelMatrix Y(X.rows(), m);
  Rng rng = make_rng(seed, 0, Stream::Labels);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::VectorXd margins = X * model.theta_star;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int j = 0; j < m; ++j) {
      const double p = model.links[static_cast<std::size_t>(j)](margins(i));
      Y(i, j) = unif(rng) < p ? std::int8_t{1} : std::int8_t{-1};
    }
  }
  return Y;
}

inline MultiLabelDataset sample_dataset(const ModelSpec& model, std::size_t n, std::uint64_t seed) {
  MultiLabelDataset data;
  data.X = sample_covariates(model.covariates, n, seed);
  data.Y = sample_labels(model, data.X, seed);
  return data;
}

/// Sign of the label sum; an exact tie is settled by a fair coin drawn from `seed`.
inline int majority_vote(std::span<const std::int8_t> labels, std::uint64_t seed) {
  if (labels.empty()) throw InvalidArgument("majority_vote needs at least one label");
  int sum = 0;
  for (auto y : labels) sum += y;
  if (sum > 0) return 1;
  if (sum < 0) return -1;
  Rng rng(seed);
  return std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
}

/// Majority labels for every row; row i breaks ties with stream (tie_seed, i).
inline std::vector<std::int8_t> majority_labels(const LabelMatrix& Y, std::uint64_t tie_seed) {
  std::vector<std::int8_t> out(static_cast<std::size_t>(Y.rows()));
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    std::span<const std::int8_t> row(Y.row(i).data(), static_cast<std::size_t>(Y.cols()));
    out[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(
        majority_vote(row, stream_seed(tie_seed, static_cast<std::uint64_t>(i), Stream::TieBreak)));
  }
  return out;
}

}  // namespace mlabel
