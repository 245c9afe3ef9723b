#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/covariates.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/link.hpp"

namespace mlabel {

using LabelMatrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Ground truth: theta*, one link per labeler, and the covariate law.
struct ModelSpec {
  Eigen::VectorXd theta_star;
  std::vector<LinkSpec> links;
  CovariateDistribution covariates;

  int d() const { return static_cast<int>(theta_star.size()); }
  int m() const { return static_cast<int>(links.size()); }
  double t_star() const { return theta_star.norm(); }
  Eigen::VectorXd u_star() const { return theta_star / theta_star.norm(); }

  bool identical_links() const {
    for (const auto& link : links)
      if (!link.same_as(links.front())) return false;
    return true;
  }

  void validate() const {
    if (theta_star.size() < 1) throw InvalidArgument("model needs d >= 1");
    if (links.empty()) throw InvalidArgument("model needs m >= 1 labelers");
    if (!(theta_star.norm() > 0.0)) throw InvalidArgument("theta* must be nonzero");
    if (covariates.dim() != d()) throw DimensionMismatch("covariate dimension differs from theta*");
    if (const auto* dir = covariates.direction()) {
      // Z must be the projection onto u*, otherwise the margin law is not the declared one.
      if (std::abs(std::abs(dir->dot(u_star())) - 1.0) > 1e-12)
        throw InvalidArgument("beta-regular covariates need direction parallel to theta*");
    }
  }

  /// Normalization required by the two-stage link-estimation pipeline.
  void require_unit_norm() const {
    if (std::abs(t_star() - 1.0) > 1e-12)
      throw InvalidArgument("semiparametric model requires ||theta*|| = 1");
  }
};

/// Covariates X (n x d) and labels Y (n x m) with entries in {-1, +1}.
struct MultiLabelDataset {
  Eigen::MatrixXd X;
  LabelMatrix Y;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  int m() const { return static_cast<int>(Y.cols()); }

  void validate() const {
    if (X.rows() != Y.rows()) throw DimensionMismatch("X and Y have different row counts");
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      for (Eigen::Index j = 0; j < Y.cols(); ++j)
        if (Y(i, j) != 1 && Y(i, j) != -1)
          throw InvalidArgument("label entries must be exactly -1 or +1");
  }

  MultiLabelDataset rows(std::span<const std::size_t> index) const {
    MultiLabelDataset out;
    out.X.resize(static_cast<Eigen::Index>(index.size()), X.cols());
    out.Y.resize(static_cast<Eigen::Index>(index.size()), Y.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(index[k]);
      out.X.row(static_cast<Eigen::Index>(k)) = X.row(i);
      out.Y.row(static_cast<Eigen::Index>(k)) = Y.row(i);
    }
    return out;
  }
};

struct FitResult {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd u_hat;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  double final_loss = 0.0;
  bool separable = false;
};

/// Predicted limit law of sqrt(n)(u_hat - u*): N(0, covariance), where
/// covariance = variance_multiplier * (P_perp Sigma P_perp)^+.
struct TheoryPrediction {
  double t_m = 0.0;
  double variance_multiplier = 0.0;
  Eigen::MatrixXd covariance;
};

}  // namespace mlabel
