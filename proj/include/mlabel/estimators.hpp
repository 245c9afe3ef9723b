#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/datagen.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/link.hpp"
#include "mlabel/model.hpp"

namespace mlabel {

enum class LossMode { MultiLabel, MajorityVote, PerLabelerLinks, CrowdScaled };

/// Which empirical risk to minimize.
///
/// MultiLabel and MajorityVote use the link loss of `model_link` on every label
/// or on the majority label. PerLabelerLinks uses labeler j's own link on column j.
/// CrowdScaled uses log(1 + exp(-y_j alpha_j <theta, x>)) averaged over labelers.
struct LossSpec {
  LossMode mode = LossMode::MultiLabel;
  LinkSpec model_link = LinkSpec::logistic();
  std::vector<LinkSpec> labeler_links;
  Eigen::VectorXd alpha;
  std::uint64_t tie_seed = 0;

  static LossSpec multi_label(LinkSpec link = LinkSpec::logistic()) {
    LossSpec spec;
    spec.model_link = std::move(link);
    return spec;
  }

  static LossSpec majority_vote(LinkSpec link = LinkSpec::logistic(), std::uint64_t tie_seed = 0) {
    LossSpec spec;
    spec.mode = LossMode::MajorityVote;
    spec.model_link = std::move(link);
    spec.tie_seed = tie_seed;
    return spec;
  }

  static LossSpec per_labeler(std::vector<LinkSpec> links) {
    LossSpec spec;
    spec.mode = LossMode::PerLabelerLinks;
    spec.labeler_links = std::move(links);
    return spec;
  }

  static LossSpec crowd_scaled(Eigen::VectorXd alpha) {
    for (Eigen::Index j = 0; j < alpha.size(); ++j)
      if (!(alpha(j) > 0.0)) throw InvalidArgument("crowd-scaled loss needs alpha_j > 0");
    LossSpec spec;
    spec.mode = LossMode::CrowdScaled;
    spec.alpha = std::move(alpha);
    return spec;
  }
};

struct SolverOptions {
  int max_iters = 200;
  double grad_tol = 1e-10;
  double divergence_threshold = 1e4;
  double ridge = 0.0;
  std::vector<double>* loss_trace = nullptr;  // receives the loss at every iterate when set
};

/// -integral_0^{y <theta, x>} sigma(-v) dv.
inline double link_loss(const LinkSpec& link, const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                        int y) {
  return link.primitive(-y * theta.dot(x));
}

namespace detail {

inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 64) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

struct RowTerms {
  double value = 0.0;
  double slope = 0.0;
  double curvature = 0.0;
};

/// The empirical risk written as (1/N) sum_i psi_i(<theta, x_i>).
class MarginObjective {
 public:
  MarginObjective(const LossSpec& spec, const MultiLabelDataset& data) : spec_(spec), data_(data) {
    data.validate();
    if (data.n() == 0) throw InvalidArgument("dataset is empty");
    m_ = data.m();
    if (m_ < 1) throw InvalidArgument("dataset has no label columns");
    const auto n = data.n();
    row_sign_.assign(n, 0);
    switch (spec.mode) {
      case LossMode::MultiLabel:
        positives_.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
          int k = 0;
          for (int j = 0; j < m_; ++j) k += data.Y(static_cast<Eigen::Index>(i), j) > 0;
          positives_[i] = k;
        }
        break;
      case LossMode::MajorityVote:
        aggregated_ = majority_labels(data.Y, spec.tie_seed);
        break;
      case LossMode::PerLabelerLinks:
        if (static_cast<int>(spec.labeler_links.size()) != m_)
          throw DimensionMismatch("per-labeler loss needs one link per label column");
        break;
      case LossMode::CrowdScaled:
        if (spec.alpha.size() != m_)
          throw DimensionMismatch("crowd-scaled loss needs one alpha per label column");
        break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (spec.mode == LossMode::MajorityVote) {
        row_sign_[i] = aggregated_[i];
        continue;
      }
      int k = 0;
      for (int j = 0; j < m_; ++j) k += data.Y(static_cast<Eigen::Index>(i), j) > 0;
      row_sign_[i] = k == m_ ? 1 : (k == 0 ? -1 : 0);
    }
    certifiable_ = certifiable();
  }

  std::size_t rows() const { return data_.n(); }

  RowTerms row(std::size_t i, double s) const {
    RowTerms t;
    const auto ii = static_cast<Eigen::Index>(i);
    switch (spec_.mode) {
      case LossMode::MultiLabel: {
        const LinkSpec& link = spec_.model_link;
        const double k = positives_[i];
        const double rest = m_ - positives_[i];
        // k * F(-s) + (m - k) * F(s); zero-weight terms are skipped exactly.
        if (k > 0) {
          t.value += k * link.primitive(-s);
          t.slope -= k * link(-s);
          t.curvature += k * link.derivative(-s);
        }
        if (rest > 0) {
          t.value += rest * link.primitive(s);
          t.slope += rest * link(s);
          t.curvature += rest * link.derivative(s);
        }
        const double inv = 1.0 / m_;
        t.value *= inv;
        t.slope *= inv;
        t.curvature *= inv;
        break;
      }
      case LossMode::MajorityVote: {
        const LinkSpec& link = spec_.model_link;
        const double y = aggregated_[i];
        t.value = link.primitive(-y * s);
        t.slope = -y * link(-y * s);
        t.curvature = link.derivative(-y * s);
        break;
      }
      case LossMode::PerLabelerLinks: {
        for (int j = 0; j < m_; ++j) {
          const LinkSpec& link = spec_.labeler_links[static_cast<std::size_t>(j)];
          const double y = data_.Y(ii, j);
          t.value += link.primitive(-y * s);
          t.slope -= y * link(-y * s);
          t.curvature += link.derivative(-y * s);
        }
        t.value /= m_;
        t.slope /= m_;
        t.curvature /= m_;
        break;
      }
      case LossMode::CrowdScaled: {
        for (int j = 0; j < m_; ++j) {
          const double a = spec_.alpha(j);
          const double y = data_.Y(ii, j);
          const double z = -y * a * s;
          t.value += softplus(z);
          t.slope -= y * a * logistic(z);
          t.curvature += a * a * logistic_slope(a * s);
        }
        t.value /= m_;
        t.slope /= m_;
        t.curvature /= m_;
        break;
      }
    }
    return t;
  }

  /// True when theta strictly separates every label; then no finite minimizer exists.
  bool separates(const Eigen::VectorXd& margins) const {
    if (!certifiable_) return false;
    for (std::size_t i = 0; i < row_sign_.size(); ++i)
      if (row_sign_[i] == 0 || row_sign_[i] * margins(static_cast<Eigen::Index>(i)) <= 0.0)
        return false;
    return true;
  }

 private:
  bool certifiable() const {
    switch (spec_.mode) {
      case LossMode::MultiLabel:
      case LossMode::MajorityVote:
        return spec_.model_link.strictly_positive();
      case LossMode::PerLabelerLinks:
        for (const auto& link : spec_.labeler_links)
          if (!link.strictly_positive()) return false;
        return true;
      case LossMode::CrowdScaled:
        return true;
    }
    return false;
  }

  const LossSpec& spec_;
  const MultiLabelDataset& data_;
  int m_ = 0;
  std::vector<int> positives_;
  std::vector<std::int8_t> aggregated_;
  std::vector<int> row_sign_;
  bool certifiable_ = false;
};

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd margins;
};

inline Evaluation evaluate(const MarginObjective& objective, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& theta, double ridge, bool derivatives) {
  Evaluation ev;
  ev.margins = X * theta;
  const std::size_t n = objective.rows();
  std::vector<double> values(n);
  Eigen::VectorXd slope(static_cast<Eigen::Index>(n));
  Eigen::VectorXd curvature(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const RowTerms t = objective.row(i, ev.margins(ii));
    values[i] = t.value;
    slope(ii) = t.slope;
    curvature(ii) = t.curvature;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  ev.value = pairwise_sum(values) * inv_n + 0.5 * ridge * theta.squaredNorm();
  if (derivatives) {
    ev.gradient = X.transpose() * slope * inv_n + ridge * theta;
    ev.hessian = X.transpose() * (curvature.asDiagonal() * X) * inv_n;
    ev.hessian.diagonal().array() += ridge;
  }
  return ev;
}

}  // namespace detail

inline double loss_value(const LossSpec& spec, const Eigen::VectorXd& theta,
                         const MultiLabelDataset& data) {
  if (theta.size() != data.d()) throw DimensionMismatch("theta length differs from covariate dimension");
  detail::MarginObjective objective(spec, data);
  return detail::evaluate(objective, data.X, theta, 0.0, false).value;
}

inline Eigen::VectorXd loss_gradient(const LossSpec& spec, const Eigen::VectorXd& theta,
                                     const MultiLabelDataset& data) {
  if (theta.size() != data.d()) throw DimensionMismatch("theta length differs from covariate dimension");
  detail::MarginObjective objective(spec, data);
  return detail::evaluate(objective, data.X, theta, 0.0, true).gradient;
}

inline Eigen::MatrixXd loss_hessian(const LossSpec& spec, const Eigen::VectorXd& theta,
                                    const MultiLabelDataset& data) {
  if (theta.size() != data.d()) throw DimensionMismatch("theta length differs from covariate dimension");
  detail::MarginObjective objective(spec, data);
  return detail::evaluate(objective, data.X, theta, 0.0, true).hessian;
}

/// Damped Newton with backtracking (and step expansion while the loss keeps
/// dropping). Falls back to the gradient direction when the Hessian is
/// near-singular. Stops with separable = true when theta strictly separates all
/// labels or its norm passes the divergence threshold on a decreasing loss.
inline FitResult fit(const LossSpec& spec, const MultiLabelDataset& data,
                     const SolverOptions& opts = {}, const Eigen::VectorXd* start = nullptr) {
  const int d = data.d();
  if (d < 1) throw DimensionMismatch("dataset has no covariate columns");
  detail::MarginObjective objective(spec, data);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  if (start != nullptr) {
    if (start->size() != d) throw DimensionMismatch("start point length differs from d");
    theta = *start;
  }
  constexpr double armijo = 1e-4;

  FitResult result;
  detail::Evaluation ev = detail::evaluate(objective, data.X, theta, opts.ridge, true);
  for (int iter = 0; iter <= opts.max_iters; ++iter) {
    const double gnorm = ev.gradient.norm();
    if (opts.loss_trace) opts.loss_trace->push_back(ev.value);
    result.iterations = iter;
    result.final_gradient_norm = gnorm;
    result.final_loss = ev.value;
    if (objective.separates(ev.margins)) {
      result.separable = true;
      break;
    }
    if (gnorm <= opts.grad_tol) break;
    if (iter == opts.max_iters)
      throw NonConvergence("solver hit max_iters=" + std::to_string(opts.max_iters) +
                           " with gradient norm " + std::to_string(gnorm));

    Eigen::VectorXd direction;
    bool newton = false;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.hessian);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const auto diag = ldlt.vectorD().cwiseAbs();
      if (diag.minCoeff() > 1e-12 * std::max(diag.maxCoeff(), 1e-300)) {
        direction = -ldlt.solve(ev.gradient);
        newton = direction.allFinite() &&
                 ev.gradient.dot(direction) < -1e-14 * gnorm * direction.norm();
      }
    }
    if (!newton) direction = -ev.gradient;
    const double slope = ev.gradient.dot(direction);

    double step = 1.0;
    detail::Evaluation trial = detail::evaluate(objective, data.X, theta + direction, opts.ridge, false);
    bool accepted = trial.value <= ev.value + armijo * step * slope;
    if (accepted) {
      for (int k = 0; k < 60; ++k) {
        detail::Evaluation longer =
            detail::evaluate(objective, data.X, theta + 2.0 * step * direction, opts.ridge, false);
        if (!(longer.value < trial.value)) break;
        step *= 2.0;
        trial = std::move(longer);
      }
    } else if (newton && std::abs(trial.value - ev.value) <= 1e-13 * (1.0 + std::abs(ev.value))) {
      // Loss differences at rounding level: judge the full Newton step by its gradient.
      detail::Evaluation full = detail::evaluate(objective, data.X, theta + direction, opts.ridge, true);
      if (full.gradient.norm() < gnorm) {
        theta += direction;
        ev = std::move(full);
        continue;
      }
    }
    if (!accepted) {
      for (int k = 0; k < 60 && !accepted; ++k) {
        step *= 0.5;
        trial = detail::evaluate(objective, data.X, theta + step * direction, opts.ridge, false);
        accepted = trial.value <= ev.value + armijo * step * slope;
      }
      if (!accepted)
        throw NonConvergence("line search failed with gradient norm " + std::to_string(gnorm));
    }
    const double previous = ev.value;
    theta += step * direction;
    ev = detail::evaluate(objective, data.X, theta, opts.ridge, true);
    if (theta.norm() > opts.divergence_threshold && ev.value < previous) {
      result.iterations = iter + 1;
      result.final_gradient_norm = ev.gradient.norm();
      result.final_loss = ev.value;
      result.separable = true;
      break;
    }
  }
  result.theta_hat = theta;
  const double norm = theta.norm();
  result.u_hat = norm > 0.0 ? Eigen::VectorXd(theta / norm) : Eigen::VectorXd::Zero(d);
  return result;
}

}  // namespace mlabel
