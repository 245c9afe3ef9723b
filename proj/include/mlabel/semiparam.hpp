#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/errors.hpp"
#include "mlabel/estimators.hpp"
#include "mlabel/link.hpp"
#include "mlabel/model.hpp"
#include "mlabel/rng.hpp"

namespace mlabel {

struct IsotonicFitOptions {
  double lipschitz = 1.0;
  bool enforce_symmetry = true;
  int grid_size = 512;
  double tolerance = 1e-8;
  int max_sweeps = 20000;

  void validate() const {
    if (!(lipschitz > 0.0)) throw InvalidArgument("isotonic fit needs lipschitz > 0");
    if (grid_size < 16) throw InvalidArgument("isotonic fit needs grid_size >= 16");
  }
};

struct LinkFit {
  std::vector<LinkSpec> links;
  std::vector<bool> degenerate;
};

namespace detail {

/// Weighted pool-adjacent-violators; nondecreasing (or nonincreasing) least squares.
inline std::vector<double> pava(std::span<const double> y, std::span<const double> w, bool increasing = true) {
  const std::size_t n = y.size();
  std::vector<double> level;
  std::vector<double> weight;
  std::vector<std::size_t> count;
  level.reserve(n);
  weight.reserve(n);
  count.reserve(n);
  const double sign = increasing ? 1.0 : -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    level.push_back(sign * y[i]);
    weight.push_back(w[i]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double wt = weight[weight.size() - 2] + weight.back();
      const double lv = (level[level.size() - 2] * weight[weight.size() - 2] + level.back() * weight.back()) / wt;
      const std::size_t c = count[count.size() - 2] + count.back();
      level.pop_back();
      weight.pop_back();
      count.pop_back();
      level.back() = lv;
      weight.back() = wt;
      count.back() = c;
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), count[b], sign * level[b]);
  return out;
}

/// Weighted least squares on a half-line: g(x_k) for 0 < x_1 < ... with g(0) = 1/2,
/// g nondecreasing and L-Lipschitz. Dykstra's algorithm between
/// {nondecreasing, >= 1/2} and {g - Lx nonincreasing, <= 1/2 + Lx}.
inline std::vector<double> half_line_fit(std::span<const double> x, std::span<const double> y,
                                         std::span<const double> w, double L, double tol, int max_sweeps) {
  const std::size_t n = x.size();
  std::vector<double> g(y.begin(), y.end());
  if (n == 0) return g;
  std::vector<double> p(n, 0.0), q(n, 0.0), a(n), b(n), f(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t k = 0; k < n; ++k) a[k] = g[k] + p[k];
    std::vector<double> proj1 = pava(a, w, true);
    for (std::size_t k = 0; k < n; ++k) {
      proj1[k] = std::max(proj1[k], 0.5);
      p[k] = a[k] - proj1[k];
      b[k] = proj1[k] + q[k];
      f[k] = b[k] - L * x[k];
    }
    std::vector<double> proj2 = pava(f, w, false);
    double change = 0.0;
    double gap = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double next = std::min(proj2[k], 0.5) + L * x[k];
      q[k] = b[k] - next;
      change = std::max(change, std::abs(next - g[k]));
      gap = std::max(gap, std::abs(next - proj1[k]));
      g[k] = next;
    }
    if (change < tol && gap < tol) break;
  }
  // exact feasibility
  double prev = 0.5;
  double xprev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    g[k] = std::clamp(g[k], prev, std::min(1.0, prev + L * (x[k] - xprev)));
    prev = g[k];
    xprev = x[k];
  }
  return g;
}

/// Values on nodes k*h, k = 0..K, from fitted values at the occupied nodes (linear in between,
/// flat beyond the last occupied node).
inline std::vector<double> fill_half_line(int K, double h, std::span<const int> occupied, std::span<const double> g) {
  std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.5);
  int last_k = 0;
  double last_v = 0.5;
  std::size_t idx = 0;
  for (int k = 1; k <= K; ++k) {
    if (idx < occupied.size() && occupied[idx] == k) {
      out[static_cast<std::size_t>(k)] = g[idx];
      for (int j = last_k + 1; j < k; ++j)
        out[static_cast<std::size_t>(j)] = last_v + (g[idx] - last_v) * double(j - last_k) / double(k - last_k);
      last_k = k;
      last_v = g[idx];
      ++idx;
    }
  }
  for (int j = last_k + 1; j <= K; ++j) out[static_cast<std::size_t>(j)] = last_v;
  (void)h;
  return out;
}

struct HalfLineData {
  std::vector<int> nodes;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;
};

inline HalfLineData collect(int K, double h, std::span<const double> sum, std::span<const double> cnt) {
  HalfLineData d;
  for (int k = 1; k <= K; ++k) {
    const double c = cnt[static_cast<std::size_t>(k)];
    if (c <= 0.0) continue;
    d.nodes.push_back(k);
    d.x.push_back(k * h);
    d.y.push_back(sum[static_cast<std::size_t>(k)] / c);
    d.w.push_back(c);
  }
  return d;
}

}  // namespace detail

/// Least-squares link estimate per labeler over margins <u_init, X_i>, targets Y = +1 -> 1.
/// The class is {nondecreasing, L-Lipschitz, sigma(0) = 1/2, optionally symmetric}; samples are
/// binned to the nearest node of an equispaced grid of 2 * (grid_size / 2) + 1 nodes spanning
/// the observed margins.
inline LinkFit fit_links(const Eigen::VectorXd& u_init, const MultiLabelDataset& data, const IsotonicFitOptions& opts = {}) {
  opts.validate();
  data.validate();
  if (data.n() == 0) throw InvalidArgument("fit_links needs a nonempty dataset");
  if (data.m() < 1) throw InvalidArgument("fit_links needs at least one labeler column");
  if (u_init.size() != data.d()) throw DimensionMismatch("u_init length differs from d");
  if (std::abs(u_init.norm() - 1.0) > 1e-9) throw InvalidArgument("u_init must be a unit vector");

  const Eigen::VectorXd v = data.X * u_init;
  double R = v.cwiseAbs().maxCoeff();
  if (!(R > 0.0)) R = 1.0;
  const int K = opts.grid_size / 2;
  const double h = R / K;
  std::vector<int> bin(data.n());
  for (std::size_t i = 0; i < data.n(); ++i)
    bin[i] = std::clamp(static_cast<int>(std::lround(v(static_cast<Eigen::Index>(i)) / h)), -K, K);

  std::vector<double> grid(static_cast<std::size_t>(2 * K + 1));
  for (int k = -K; k <= K; ++k) grid[static_cast<std::size_t>(k + K)] = k * h;

  LinkFit out;
  const auto Ks = static_cast<std::size_t>(K);
  for (int j = 0; j < data.m(); ++j) {
    std::vector<double> pos_sum(Ks + 1, 0.0), pos_cnt(Ks + 1, 0.0), neg_sum(Ks + 1, 0.0), neg_cnt(Ks + 1, 0.0);
    int positives = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const double y = data.Y(static_cast<Eigen::Index>(i), j) > 0 ? 1.0 : 0.0;
      positives += y > 0.0;
      const int k = bin[i];
      if (k >= 0) {
        pos_sum[static_cast<std::size_t>(k)] += y;
        pos_cnt[static_cast<std::size_t>(k)] += 1.0;
      } else {
        // mirrored: 1 - sigma(-x) is fitted on the positive half-line
        neg_sum[static_cast<std::size_t>(-k)] += 1.0 - y;
        neg_cnt[static_cast<std::size_t>(-k)] += 1.0;
      }
    }
    out.degenerate.push_back(positives == 0 || positives == static_cast<int>(data.n()));

    std::vector<double> values(grid.size(), 0.5);
    auto solve = [&](std::span<const double> sum, std::span<const double> cnt) {
      const detail::HalfLineData hd = detail::collect(K, h, sum, cnt);
      const std::vector<double> g =
          detail::half_line_fit(hd.x, hd.y, hd.w, opts.lipschitz, opts.tolerance, opts.max_sweeps);
      return detail::fill_half_line(K, h, hd.nodes, g);
    };
    if (opts.enforce_symmetry) {
      std::vector<double> sum(Ks + 1), cnt(Ks + 1);
      for (std::size_t k = 0; k <= Ks; ++k) {
        sum[k] = pos_sum[k] + neg_sum[k];
        cnt[k] = pos_cnt[k] + neg_cnt[k];
      }
      const std::vector<double> half = solve(sum, cnt);
      for (int k = 1; k <= K; ++k) {
        values[static_cast<std::size_t>(K + k)] = half[static_cast<std::size_t>(k)];
        values[static_cast<std::size_t>(K - k)] = 1.0 - half[static_cast<std::size_t>(k)];
      }
    } else {
      const std::vector<double> right = solve(pos_sum, pos_cnt);
      const std::vector<double> left = solve(neg_sum, neg_cnt);
      for (int k = 1; k <= K; ++k) {
        values[static_cast<std::size_t>(K + k)] = right[static_cast<std::size_t>(k)];
        values[static_cast<std::size_t>(K - k)] = 1.0 - left[static_cast<std::size_t>(k)];
      }
    }
    out.links.push_back(LinkSpec::tabulated(grid, std::move(values), opts.lipschitz, opts.enforce_symmetry));
  }
  return out;
}

/// Root-mean-square difference between two links over the given margins.
inline double link_l2_error(const LinkSpec& fitted, const LinkSpec& truth, std::span<const double> margins) {
  if (margins.empty()) throw InvalidArgument("link_l2_error needs margins");
  double s = 0.0;
  for (double z : margins) {
    const double e = fitted(z) - truth(z);
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(margins.size()));
}

struct DataSplit {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Seeded partition of 0..n-1; `fraction` of the rows go to `first`. Both parts need >= d + 1 rows.
inline DataSplit split_rows(std::size_t n, double fraction, int d, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("split fraction must lie in (0, 1)");
  const auto n1 = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const auto need = static_cast<std::size_t>(d) + 1;
  if (n1 < need || n - std::min(n, n1) < need)
    throw InvalidArgument("split leaves fewer than d + 1 rows in a stage");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0, Stream::Split);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i)(rng);
    std::swap(perm[i], perm[j]);
  }
  DataSplit s;
  s.first.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
  s.second.assign(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
  std::sort(s.first.begin(), s.first.end());
  std::sort(s.second.begin(), s.second.end());
  return s;
}

struct SemiparamOptions {
  double split_fraction = 0.1;
  std::uint64_t seed = 0;
  IsotonicFitOptions isotonic;
  SolverOptions solver;
};

struct SemiparamResult {
  FitResult fit;
  FitResult initial;
  LinkFit links;
  std::size_t stage1_rows = 0;
  std::size_t stage2_rows = 0;
};

/// Stage 1 on the held-out split: multi-label logistic direction, then link fits.
/// Stage 2 on the rest: ERM with the fitted per-labeler link losses.
inline SemiparamResult semiparametric_fit(const MultiLabelDataset& data, const SemiparamOptions& opts = {}) {
  data.validate();
  const DataSplit split = split_rows(data.n(), opts.split_fraction, data.d(), opts.seed);
  const MultiLabelDataset first = data.rows(split.first);
  const MultiLabelDataset second = data.rows(split.second);

  SemiparamResult out;
  out.stage1_rows = first.n();
  out.stage2_rows = second.n();
  out.initial = fit(LossSpec::multi_label(), first, opts.solver);
  if (out.initial.u_hat.norm() == 0.0) throw NonConvergence("stage-1 direction is undefined (theta_hat = 0)");
  out.links = fit_links(out.initial.u_hat, first, opts.isotonic);
  out.fit = fit(LossSpec::per_labeler(out.links.links), second, opts.solver);
  return out;
}

struct AlphaEstimate {
  Eigen::VectorXd alpha;
  std::vector<bool> flagged;
};

/// Per-labeler 1-D logistic MLE of alpha_j in P(Y_j = 1 | x) = sigma(alpha_j <u_ref, x>).
/// Estimates below 1e-3 are floored there and flagged; separable columns are capped at 1e4 and flagged.
inline AlphaEstimate estimate_alpha(const MultiLabelDataset& data, const Eigen::VectorXd& u_ref,
                                    const SolverOptions& solver = {}) {
  constexpr double floor = 1e-3;
  constexpr double cap = 1e4;
  data.validate();
  if (u_ref.size() != data.d()) throw DimensionMismatch("u_ref length differs from d");
  if (std::abs(u_ref.norm() - 1.0) > 1e-9) throw InvalidArgument("u_ref must be a unit vector");
  MultiLabelDataset column;
  column.X = data.X * u_ref;
  AlphaEstimate out;
  out.alpha.resize(data.m());
  for (int j = 0; j < data.m(); ++j) {
    column.Y = data.Y.col(j);
    const FitResult r = fit(LossSpec::multi_label(), column, solver);
    double a = r.theta_hat(0);
    bool flag = false;
    if (r.separable || !(a < cap)) {
      a = cap;
      flag = true;
    } else if (a < floor) {
      a = floor;
      flag = true;
    }
    out.alpha(j) = a;
    out.flagged.push_back(flag);
  }
  return out;
}

inline FitResult crowdsourced_fit(const MultiLabelDataset& data, const Eigen::VectorXd& alpha_estimate,
                                  const SolverOptions& solver = {}) {
  return fit(LossSpec::crowd_scaled(alpha_estimate), data, solver);
}

struct CrowdResult {
  FitResult fit;
  FitResult reference;
  AlphaEstimate alpha;
  std::size_t stage1_rows = 0;
  std::size_t stage2_rows = 0;
};

/// alpha estimated on the held-out split against a multi-label logistic direction,
/// then the crowd-scaled fit on the remaining rows.
inline CrowdResult crowd_pipeline(const MultiLabelDataset& data, double split_fraction, std::uint64_t seed,
                                  const SolverOptions& solver = {}) {
  data.validate();
  const DataSplit split = split_rows(data.n(), split_fraction, data.d(), seed);
  const MultiLabelDataset first = data.rows(split.first);
  const MultiLabelDataset second = data.rows(split.second);
  CrowdResult out;
  out.stage1_rows = first.n();
  out.stage2_rows = second.n();
  out.reference = fit(LossSpec::multi_label(), first, solver);
  if (out.reference.u_hat.norm() == 0.0) throw NonConvergence("stage-1 direction is undefined (theta_hat = 0)");
  out.alpha = estimate_alpha(first, out.reference.u_hat, solver);
  out.fit = crowdsourced_fit(second, out.alpha.alpha, solver);
  return out;
}

}  // namespace mlabel
