#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mlabel/errors.hpp"

namespace mlabel {

enum class LinkFamily { Logistic, ScaledLogistic, TabulatedMonotone };

namespace detail {

// log(1 + e^x) without overflow
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// sigma(t) * sigma(-t)
inline double logistic_slope(double t) {
  const double e = std::exp(-std::abs(t));
  return e / ((1.0 + e) * (1.0 + e));
}

}  // namespace detail

/// Link function sigma: R -> [0, 1] with sigma(0) = 1/2 and sign(sigma(t) - 1/2) = sign(t).
///
/// Tabulated links interpolate linearly between knots and clamp to the end
/// values outside the grid. The derivative uses the right slope at knots.
class LinkSpec {
 public:
  LinkSpec() = default;

  static LinkSpec logistic() { return LinkSpec(LinkFamily::Logistic, 1.0); }

  static LinkSpec scaled_logistic(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
      throw InvalidArgument("scaled-logistic link needs alpha > 0");
    return LinkSpec(LinkFamily::ScaledLogistic, alpha);
  }

  /// Throws InvalidArgument unless the table is sorted, monotone, within [0, 1],
  /// L-Lipschitz, and passes through (0, 1/2). When `symmetric` is set the table
  /// must also satisfy sigma(t) + sigma(-t) = 1 at every knot.
  static LinkSpec tabulated(std::vector<double> grid, std::vector<double> values, double lipschitz,
                            bool symmetric) {
    LinkSpec link(LinkFamily::TabulatedMonotone, 1.0);
    link.grid_ = std::move(grid);
    link.values_ = std::move(values);
    link.lipschitz_ = lipschitz;
    link.symmetric_ = symmetric;
    link.validate_table();
    link.detect_uniform_grid();
    link.build_primitive();
    if (symmetric) link.check_symmetry();
    return link;
  }

  LinkFamily family() const { return family_; }
  double alpha() const { return alpha_; }
  bool symmetric() const { return symmetric_; }
  double lipschitz() const { return lipschitz_; }
  std::span<const double> grid() const { return grid_; }
  std::span<const double> values() const { return values_; }

  /// True when sigma(-v) > 0 for every v, i.e. the link loss has no flat region.
  bool strictly_positive() const {
    return family_ != LinkFamily::TabulatedMonotone || (values_.front() > 0.0 && values_.back() < 1.0);
  }

  double operator()(double t) const {
    switch (family_) {
      case LinkFamily::Logistic:
        return detail::logistic(t);
      case LinkFamily::ScaledLogistic:
        return detail::logistic(alpha_ * t);
      case LinkFamily::TabulatedMonotone:
        return interpolate(t);
    }
    return 0.5;
  }

  /// 1 - sigma(t) without cancellation for the logistic families.
  double complement(double t) const {
    switch (family_) {
      case LinkFamily::Logistic:
        return detail::logistic(-t);
      case LinkFamily::ScaledLogistic:
        return detail::logistic(-alpha_ * t);
      case LinkFamily::TabulatedMonotone:
        return 1.0 - interpolate(t);
    }
    return 0.5;
  }

  double derivative(double t) const {
    switch (family_) {
      case LinkFamily::Logistic:
        return detail::logistic_slope(t);
      case LinkFamily::ScaledLogistic:
        return alpha_ * detail::logistic_slope(alpha_ * t);
      case LinkFamily::TabulatedMonotone: {
        if (t < grid_.front() || t >= grid_.back()) return 0.0;
        const std::size_t k = segment(t);
        return (values_[k + 1] - values_[k]) / (grid_[k + 1] - grid_[k]);
      }
    }
    return 0.0;
  }

  /// Integral of sigma over [0, x].
  double primitive(double x) const {
    switch (family_) {
      case LinkFamily::Logistic:
        return detail::softplus(x) - std::numbers::ln2;
      case LinkFamily::ScaledLogistic:
        return (detail::softplus(alpha_ * x) - std::numbers::ln2) / alpha_;
      case LinkFamily::TabulatedMonotone:
        return cumulative(x) - cumulative_at_zero_;
    }
    return 0.0;
  }

  bool same_as(const LinkSpec& other) const {
    if (family_ != other.family_) return false;
    if (family_ == LinkFamily::ScaledLogistic) return alpha_ == other.alpha_;
    if (family_ == LinkFamily::TabulatedMonotone)
      return grid_ == other.grid_ && values_ == other.values_;
    return true;
  }

  std::string describe() const {
    std::ostringstream os;
    switch (family_) {
      case LinkFamily::Logistic:
        os << "logistic";
        break;
      case LinkFamily::ScaledLogistic:
        os << "scaled-logistic:" << alpha_;
        break;
      case LinkFamily::TabulatedMonotone:
        os << "tabulated:" << grid_.size() << "-knots";
        break;
    }
    return os.str();
  }

 private:
  LinkSpec(LinkFamily family, double alpha)
      : family_(family), alpha_(alpha), lipschitz_(0.25 * alpha) {}

  std::size_t segment(double t) const {
    if (uniform_step_ > 0.0) {
      const double pos = (t - grid_.front()) / uniform_step_;
      std::size_t k = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
      k = std::min(k, grid_.size() - 2);
      // rounding can put t one cell off
      if (k + 1 < grid_.size() - 1 && t >= grid_[k + 1]) ++k;
      else if (k > 0 && t < grid_[k]) --k;
      return k;
    }
    auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    std::size_t k = static_cast<std::size_t>(it - grid_.begin());
    k = k == 0 ? 0 : k - 1;
    return std::min(k, grid_.size() - 2);
  }

  double interpolate(double t) const {
    if (t <= grid_.front()) return values_.front();
    if (t >= grid_.back()) return values_.back();
    const std::size_t k = segment(t);
    if (t == grid_[k]) return values_[k];
    const double w = (t - grid_[k]) / (grid_[k + 1] - grid_[k]);
    return values_[k] + w * (values_[k + 1] - values_[k]);
  }

  // Integral of sigma from grid_.front() to x, extended by the clamped end values.
  double cumulative(double x) const {
    if (x <= grid_.front()) return -(grid_.front() - x) * values_.front();
    if (x >= grid_.back()) return knot_integral_.back() + (x - grid_.back()) * values_.back();
    const std::size_t k = segment(x);
    return knot_integral_[k] + 0.5 * (x - grid_[k]) * (values_[k] + interpolate(x));
  }

  void validate_table() const {
    if (grid_.size() < 2 || grid_.size() != values_.size())
      throw InvalidArgument("tabulated link needs matching grid/value arrays of size >= 2");
    if (!(lipschitz_ > 0.0)) throw InvalidArgument("tabulated link needs lipschitz > 0");
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!(values_[i] >= 0.0 && values_[i] <= 1.0))
        throw InvalidArgument("tabulated link values must lie in [0, 1]");
      if (i == 0) continue;
      const double h = grid_[i] - grid_[i - 1];
      const double dv = values_[i] - values_[i - 1];
      if (!(h > 0.0)) throw InvalidArgument("tabulated link grid must be strictly increasing");
      if (dv < 0.0) throw InvalidArgument("tabulated link values must be nondecreasing");
      if (dv > lipschitz_ * h * (1.0 + 1e-9) + 1e-15)
        throw InvalidArgument("tabulated link violates its Lipschitz bound");
    }
    if (!(grid_.front() <= 0.0 && grid_.back() >= 0.0))
      throw InvalidArgument("tabulated link grid must contain 0");
    if (std::abs(interpolate(0.0) - 0.5) > 1e-12)
      throw InvalidArgument("tabulated link must satisfy sigma(0) = 1/2");
  }

  void check_symmetry() const {
    for (double t : grid_) {
      if (std::abs(interpolate(t) + interpolate(-t) - 1.0) > 1e-12)
        throw InvalidArgument("tabulated link flagged symmetric but sigma(t) + sigma(-t) != 1");
    }
  }

  void detect_uniform_grid() {
    const double h = (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
    for (std::size_t k = 1; k < grid_.size(); ++k)
      if (std::abs(grid_[k] - grid_[k - 1] - h) > 1e-9 * h) return;
    uniform_step_ = h;
  }

  void build_primitive() {
    knot_integral_.assign(grid_.size(), 0.0);
    for (std::size_t k = 1; k < grid_.size(); ++k)
      knot_integral_[k] = knot_integral_[k - 1] +
                          0.5 * (grid_[k] - grid_[k - 1]) * (values_[k] + values_[k - 1]);
    cumulative_at_zero_ = cumulative(0.0);
  }

  LinkFamily family_ = LinkFamily::Logistic;
  double alpha_ = 1.0;
  bool symmetric_ = true;
  double lipschitz_ = 0.0;
  std::vector<double> grid_;
  std::vector<double> values_;
  std::vector<double> knot_integral_;
  double cumulative_at_zero_ = 0.0;
  double uniform_step_ = 0.0;
};

inline double link_eval(const LinkSpec& link, double t) { return link(t); }
inline double link_derivative(const LinkSpec& link, double t) { return link.derivative(t); }

}  // namespace mlabel
