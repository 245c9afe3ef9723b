#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "mlabel/errors.hpp"

namespace mlabel {

struct IsotropicGaussian {
  int d = 1;
};

/// X = Z u + W with |Z| ~ Gamma(beta, 1), a fair random sign, and W ~ N(0, I)
/// projected orthogonal to the unit vector u = `direction`.
struct BetaRegular {
  int d = 1;
  double beta = 1.0;
  Eigen::VectorXd direction;
};

/// Covariate law. Z denotes the projection <X, u*> on the signal direction;
/// every supported law decomposes X into Z u* plus an independent orthogonal part.
class CovariateDistribution {
 public:
  CovariateDistribution() : kind_(IsotropicGaussian{1}) {}

  static CovariateDistribution gaussian(int d) {
    if (d < 1) throw InvalidArgument("covariate dimension must be >= 1");
    CovariateDistribution dist;
    dist.kind_ = IsotropicGaussian{d};
    return dist;
  }

  static CovariateDistribution beta_regular(int d, double beta, Eigen::VectorXd direction) {
    if (d < 1) throw InvalidArgument("covariate dimension must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw InvalidArgument("beta must be > 0 for a (beta, c_Z)-regular margin law");
    if (direction.size() != d) throw DimensionMismatch("direction length differs from d");
    const double norm = direction.norm();
    if (!(norm > 0.0)) throw InvalidArgument("direction must be nonzero");
    CovariateDistribution dist;
    dist.kind_ = BetaRegular{d, beta, direction / norm};
    return dist;
  }

  bool is_gaussian() const { return std::holds_alternative<IsotropicGaussian>(kind_); }

  int dim() const {
    return std::visit([](const auto& k) { return k.d; }, kind_);
  }

  /// Noise exponent of the margin law.
  double beta() const { return is_gaussian() ? 1.0 : std::get<BetaRegular>(kind_).beta; }

  /// Limit of z^{1 - beta} p(z) at 0, p the density of |Z|.
  double c_z() const {
    if (is_gaussian()) return std::sqrt(2.0 / std::numbers::pi);
    return 1.0 / std::tgamma(beta());
  }

  /// Density of |Z| on (0, inf).
  double abs_density(double z) const {
    if (z <= 0.0) return 0.0;
    if (is_gaussian()) return 2.0 * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double b = beta();
    return std::exp((b - 1.0) * std::log(z) - z - std::lgamma(b));
  }

  const Eigen::VectorXd* direction() const {
    if (is_gaussian()) return nullptr;
    return &std::get<BetaRegular>(kind_).direction;
  }

  /// E[Z^2].
  double z_second_moment() const {
    const double b = beta();
    return is_gaussian() ? 1.0 : b * (b + 1.0);
  }

  /// Covariance of X, given the signal direction u (unit).
  Eigen::MatrixXd covariance(const Eigen::VectorXd& u) const {
    const int d = dim();
    if (is_gaussian()) return Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd& dir = *direction();
    const Eigen::MatrixXd proj = dir * dir.transpose();
    (void)u;
    return z_second_moment() * proj + (Eigen::MatrixXd::Identity(d, d) - proj);
  }

  std::string describe() const {
    if (is_gaussian()) return "gaussian";
    return "beta-regular:" + std::to_string(beta());
  }

 private:
  std::variant<IsotropicGaussian, BetaRegular> kind_;
};

}  // namespace mlabel
