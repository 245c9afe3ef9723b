#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <queue>
#include <string>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mlabel/covariates.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/rng.hpp"

namespace mlabel {

enum class QuadratureMethod { GaussHermite, Adaptive, MonteCarlo };

struct EngineOptions {
  QuadratureMethod method = QuadratureMethod::Adaptive;
  int gh_order = 64;
  double rel_tol = 1e-9;
  std::size_t mc_samples = 1'000'000;
  std::uint64_t mc_seed = 0;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

namespace detail {

inline std::vector<double> breakpoints(std::span<const double> scales) {
  std::vector<double> pts{1.0, 4.0, 16.0, 40.0};
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) continue;
    for (double k : {0.0625, 0.25, 1.0, 4.0, 16.0}) pts.push_back(s * k);
  }
  std::erase_if(pts, [](double p) { return p < 1e-9 || p > 40.0; });
  std::sort(pts.begin(), pts.end());
  std::vector<double> merged;
  for (double p : pts)
    if (merged.empty() || p > merged.back() * 1.05) merged.push_back(p);
  return merged;
}

}  // namespace detail

namespace detail {

struct Panel {
  double a, b, value, error, l1;
  bool operator<(const Panel& o) const { return error < o.error; }
};

/// Global adaptive GK31 over [a, b] pieces: bisects the worst panel until the
/// summed error is below max(rel_tol * L1, abs_tol).
template <class F>
class PanelIntegrator {
 public:
  PanelIntegrator(F& f, double rel_tol, double abs_tol) : f_(f), rel_tol_(rel_tol), abs_tol_(abs_tol) {}

  void add(double a, double b) { push(a, b); }

  double run() {
    constexpr int max_splits = 4000;
    for (int k = 0; k < max_splits && !done(); ++k) {
      const Panel worst = heap_.top();
      heap_.pop();
      value_ -= worst.value;
      error_ -= worst.error;
      l1_ -= worst.l1;
      const double mid = 0.5 * (worst.a + worst.b);
      push(worst.a, mid);
      push(mid, worst.b);
    }
    if (!done())
      throw QuadratureFailure("adaptive quadrature missed its tolerance (error " + std::to_string(error_) + ")");
    double v = 0.0;
    for (auto h = heap_; !h.empty(); h.pop()) v += h.top().value;
    if (!std::isfinite(v)) throw QuadratureFailure("non-finite value in adaptive quadrature");
    return v;
  }

 private:
  bool done() const { return error_ <= std::max(rel_tol_ * l1_, abs_tol_); }

  void push(double a, double b) {
    double err = 0.0;
    double l1 = 0.0;
    const double v =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f_, a, b, 0, 0.0, &err, &l1);
    if (!std::isfinite(v)) throw QuadratureFailure("non-finite value in adaptive quadrature");
    heap_.push({a, b, v, err, l1});
    value_ += v;
    error_ += err;
    l1_ += l1;
  }

  F& f_;
  double rel_tol_;
  double abs_tol_;
  std::priority_queue<Panel> heap_;
  double value_ = 0.0;
  double error_ = 0.0;
  double l1_ = 0.0;
};

}  // namespace detail

/// Integral of g over (0, inf). `head_beta` < 1 flags a z^{head_beta - 1}
/// endpoint singularity, removed by z = b s^{1/head_beta} on the first piece.
template <class G>
double integrate_positive(G&& g, std::span<const double> scales, double head_beta = 1.0,
                          double rel_tol = 1e-9, double abs_tol = 1e-15) {
  const std::vector<double> pts = detail::breakpoints(scales);
  const double b0 = pts.front();
  const double tail = pts.back();
  const double inv = head_beta < 1.0 ? 1.0 / head_beta : 1.0;
  // u in [0, 1]: head; [1, n]: breakpoint pieces; [n, n + 1]: tail
  const double n = static_cast<double>(pts.size());
  auto mapped = [&](double u) -> double {
    if (u < 1.0) {
      if (u <= 0.0) return 0.0;
      if (head_beta < 1.0) return g(b0 * std::pow(u, inv)) * b0 * inv * std::pow(u, inv - 1.0);
      return g(b0 * u) * b0;
    }
    if (u < n) {
      const double k = std::min(std::floor(u), n - 1.0);
      const auto idx = static_cast<std::size_t>(k);
      const double a = pts[idx - 1];
      const double b = pts[idx];
      return g(a + (u - k) * (b - a)) * (b - a);
    }
    const double r = u - n;
    if (r >= 1.0) return 0.0;
    const double v = g(tail - std::log1p(-r));
    return v == 0.0 ? 0.0 : v / (1.0 - r);
  };
  detail::PanelIntegrator<decltype(mapped)> integ(mapped, rel_tol, abs_tol);
  for (double k = 0.0; k <= n; k += 1.0) integ.add(k, k + 1.0);
  return integ.run();
}

/// Gauss-Hermite nodes/weights for weight exp(-x^2), by Golub-Welsch.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite_rule(int order) {
  if (order < 1) throw InvalidArgument("Gauss-Hermite order must be >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  Eigen::VectorXd nodes = eig.eigenvalues();
  Eigen::VectorXd weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
  return {nodes, weights};
}

/// Computes E[f(Z)], Z the signed projection of X on the signal direction.
class ZExpectationEngine {
 public:
  explicit ZExpectationEngine(CovariateDistribution dist = {}, EngineOptions opts = {})
      : dist_(std::move(dist)), opts_(opts) {
    if (opts_.method == QuadratureMethod::GaussHermite) {
      if (!dist_.is_gaussian()) throw InvalidArgument("Gauss-Hermite needs Gaussian Z");
      auto [x, w] = gauss_hermite_rule(opts_.gh_order);
      gh_nodes_ = std::sqrt(2.0) * x;
      gh_weights_ = w / std::sqrt(std::numbers::pi);
    }
    if (!(opts_.rel_tol > 0.0)) throw InvalidArgument("rel_tol must be positive");
  }

  const CovariateDistribution& distribution() const { return dist_; }
  const EngineOptions& options() const { return opts_; }

  /// `scales` are lengths in z where f changes shape (e.g. 1/t for sigma(tz)).
  template <class F>
  double expect(F&& f, std::span<const double> scales = {}) const {
    return expect_with_error(std::forward<F>(f), scales).value;
  }

  template <class F>
  Estimate expect_with_error(F&& f, std::span<const double> scales = {}) const {
    switch (opts_.method) {
      case QuadratureMethod::GaussHermite: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < gh_nodes_.size(); ++k) s += gh_weights_(k) * f(gh_nodes_(k));
        return {s, 0.0};
      }
      case QuadratureMethod::Adaptive:
        return {expect_abs([&](double z) { return 0.5 * (f(z) + f(-z)); }, scales), 0.0};
      case QuadratureMethod::MonteCarlo:
        return monte_carlo(f);
    }
    return {};
  }

  /// E[g(|Z|)] by adaptive quadrature against the density of |Z|.
  template <class G>
  double expect_abs(G&& g, std::span<const double> scales = {}) const {
    const double beta = dist_.beta();
    return integrate_positive(
        [&](double z) {
          const double p = dist_.abs_density(z);
          return p == 0.0 ? 0.0 : g(z) * p;
        },
        scales, beta, opts_.rel_tol);
  }

 private:
  template <class F>
  Estimate monte_carlo(F& f) const {
    if (opts_.mc_samples < 2) throw InvalidArgument("Monte Carlo needs at least 2 samples");
    Rng rng = make_rng(opts_.mc_seed, 0, Stream::MonteCarlo);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> gamma(dist_.beta(), 1.0);
    std::bernoulli_distribution coin(0.5);
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t k = 0; k < opts_.mc_samples; ++k) {
      double z;
      if (dist_.is_gaussian()) {
        z = normal(rng);
      } else {
        const double g = gamma(rng);
        z = coin(rng) ? g : -g;
      }
      const double v = f(z);
      const double delta = v - mean;
      mean += delta / static_cast<double>(k + 1);
      m2 += delta * (v - mean);
    }
    const double n = static_cast<double>(opts_.mc_samples);
    return {mean, std::sqrt(m2 / (n - 1.0) / n)};
  }

  CovariateDistribution dist_;
  EngineOptions opts_;
  Eigen::VectorXd gh_nodes_;
  Eigen::VectorXd gh_weights_;
};

}  // namespace mlabel
