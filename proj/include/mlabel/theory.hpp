#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>

#include "mlabel/covariates.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/link.hpp"
#include "mlabel/majority.hpp"
#include "mlabel/model.hpp"
#include "mlabel/quadrature.hpp"

namespace mlabel {

enum class GapMode { MultiLabel, MajorityVote };

/// h(t) = E[sigma(tZ) Z (1 - phi(t* Z))] - E[sigma(-tZ) Z phi(t* Z)], where phi is
/// the average true link (MultiLabel) or the majority-vote law (MajorityVote).
struct GapFunction {
  GapMode mode = GapMode::MultiLabel;
  double t_star = 1.0;
  int m = 1;
  LinkSpec model_link = LinkSpec::logistic();
  std::vector<LinkSpec> true_links;
  ZExpectationEngine engine;
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// P(label = +1 | margin) and its complement, for either aggregation mode.
class LabelCurve {
 public:
  LabelCurve(GapMode mode, const std::vector<LinkSpec>& links, int m)
      : mode_(mode), links_(links), majority_(links, m) {
    if (links.empty()) throw InvalidArgument("need at least one true link");
  }

  std::pair<double, double> operator()(double v) const {
    if (mode_ == GapMode::MajorityVote) {
      const auto p = majority_.at(v);
      return {p.positive, p.negative};
    }
    double pos = 0.0;
    double neg = 0.0;
    for (const auto& l : links_) {
      pos += l(v);
      neg += l.complement(v);
    }
    const double k = static_cast<double>(links_.size());
    return {pos / k, neg / k};
  }

 private:
  GapMode mode_;
  const std::vector<LinkSpec>& links_;
  MajorityLinks majority_;
};

inline std::vector<double> gap_scales(const GapFunction& g, double t) {
  std::vector<double> s{1.0 / t, 1.0 / g.t_star};
  if (g.mode == GapMode::MajorityVote) s.push_back(1.0 / (g.t_star * std::sqrt(double(g.m))));
  return s;
}

inline bool well_specified(const LinkSpec& model_link, const std::vector<LinkSpec>& links) {
  for (const auto& l : links)
    if (!l.same_as(model_link)) return false;
  return true;
}

}  // namespace detail

inline double gap_eval(const GapFunction& g, double t) {
  if (t < 0.0) throw InvalidArgument("gap function is evaluated at t >= 0");
  const detail::LabelCurve phi(g.mode, g.true_links, g.m);
  const LinkSpec& s = g.model_link;
  const auto scales = detail::gap_scales(g, t);
  return g.engine.expect(
      [&](double z) {
        const auto [pos, neg] = phi(g.t_star * z);
        return s(t * z) * z * neg - s(-t * z) * z * pos;
      },
      scales);
}

/// Root t_m of the gap function: expanding bracket from t*, then TOMS 748.
inline double solve_tm(const GapFunction& g) {
  if (!(g.t_star > 0.0)) throw InvalidArgument("solve_tm needs t* > 0");
  constexpr double cap = 1e6;
  auto h = [&](double t) { return gap_eval(g, t); };
  double lo = g.t_star;
  double hi = g.t_star;
  double h_lo = h(lo);
  double h_hi = h_lo;
  if (h_lo == 0.0) return lo;
  if (h_lo < 0.0) {
    while (h_hi < 0.0) {
      lo = hi;
      h_lo = h_hi;
      hi *= 2.0;
      if (hi > cap) throw BracketNotFound("gap function stays negative up to t = 1e6");
      h_hi = h(hi);
    }
  } else {
    while (h_lo > 0.0) {
      hi = lo;
      h_hi = h_lo;
      lo *= 0.5;
      if (lo < 1e-9) {
        lo = 0.0;
        h_lo = h(0.0);
        break;
      }
      h_lo = h(lo);
    }
    if (!(h_lo < 0.0)) throw BracketNotFound("gap function is not negative near t = 0");
  }
  if (h_hi == 0.0) return hi;
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-11 * std::max(1.0, std::abs(a)); };
  const auto r = boost::math::tools::toms748_solve(h, lo, hi, h_lo, h_hi, tol, iters);
  const double t_m = 0.5 * (r.first + r.second);
  if (g.mode == GapMode::MajorityVote && detail::well_specified(g.model_link, g.true_links) &&
      t_m < g.t_star * (1.0 - 1e-8))
    throw Error("majority-vote root fell below t* in a well-specified model");
  return t_m;
}

/// Moore-Penrose inverse of a symmetric PSD matrix, eigenvalue cutoff 1e-12 * max.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (A + A.transpose()));
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = 1e-12 * lambda.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index k = 0; k < lambda.size(); ++k)
    if (std::abs(lambda(k)) > cutoff) inv(k) = 1.0 / lambda(k);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

/// A^+ + B^+, which equals (A + B)^{-1} when AB = BA = 0 and A + B is invertible.
inline Eigen::MatrixXd pseudo_inverse_decomp(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw DimensionMismatch("pseudo_inverse_decomp needs square matrices of equal size");
  const double ab = (A * B).norm();
  if (ab > 1e-10) throw NotOrthogonal("||AB|| = " + std::to_string(ab) + " exceeds 1e-10");
  return pseudo_inverse(A) + pseudo_inverse(B);
}

/// (P Sigma P)^+ with P the projector orthogonal to u.
inline Eigen::MatrixXd projected_sigma_pinv(const CovariateDistribution& dist, const Eigen::VectorXd& u) {
  const Eigen::Index d = u.size();
  const Eigen::MatrixXd uu = u * u.transpose();
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d) - uu;
  const Eigen::MatrixXd A = P * dist.covariance(u) * P;
  Eigen::MatrixXd out = P * (pseudo_inverse_decomp(A, uu) - uu) * P;
  return 0.5 * (out + out.transpose());
}

enum class PredictionKind { MultiLabelExact, MajorityVoteExact, WellSpecified, Semiparametric, Crowdsourcing };

struct TheoryInputs {
  ModelSpec model;
  LinkSpec model_link = LinkSpec::logistic();
  Eigen::VectorXd alpha;
  EngineOptions engine;
};

namespace detail {

inline Eigen::VectorXd crowd_alpha(const TheoryInputs& in) {
  if (in.alpha.size() > 0) {
    if (in.alpha.size() != in.model.m()) throw DimensionMismatch("alpha length differs from m");
    return in.alpha;
  }
  Eigen::VectorXd a(in.model.m());
  for (int j = 0; j < in.model.m(); ++j) {
    const auto& l = in.model.links[static_cast<std::size_t>(j)];
    if (l.family() == LinkFamily::TabulatedMonotone)
      throw InvalidArgument("crowdsourcing prediction needs alpha or logistic-family true links");
    a(j) = l.alpha();
  }
  return a;
}

// E[sigma(a Z)(1 - sigma(a Z))] for logistic sigma
inline double logistic_variance(const ZExpectationEngine& e, double a) {
  const double scale = 1.0 / a;
  return e.expect([&](double z) { return logistic_slope(a * z); }, std::span<const double>(&scale, 1));
}

}  // namespace detail

/// E[v_j] weighted by alpha_j^2: 1 / (t*^2 sum_j alpha_j^2 E[sigma(alpha_j t* Z)(1 - sigma(alpha_j t* Z))]).
inline double crowd_sandwich_multiplier(const TheoryInputs& in) {
  in.model.validate();
  const ZExpectationEngine engine(in.model.covariates, in.engine);
  const Eigen::VectorXd alpha = detail::crowd_alpha(in);
  const double t = in.model.t_star();
  double s = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j)
    s += alpha(j) * alpha(j) * detail::logistic_variance(engine, alpha(j) * t);
  return 1.0 / (t * t * s);
}

inline TheoryPrediction predict_covariance(PredictionKind kind, const TheoryInputs& in) {
  const ModelSpec& model = in.model;
  model.validate();
  const ZExpectationEngine engine(model.covariates, in.engine);
  const double ts = model.t_star();
  const int m = model.m();
  const LinkSpec& sigma = in.model_link;
  TheoryPrediction out;

  switch (kind) {
    case PredictionKind::MultiLabelExact:
    case PredictionKind::MajorityVoteExact: {
      const GapMode mode = kind == PredictionKind::MultiLabelExact ? GapMode::MultiLabel : GapMode::MajorityVote;
      GapFunction g{mode, ts, m, sigma, model.links, engine};
      const double t = solve_tm(g);
      const detail::LabelCurve phi(mode, model.links, m);
      const auto scales = detail::gap_scales(g, t);
      const double he = engine.expect(
          [&](double z) {
            const auto [pos, neg] = phi(ts * z);
            return sigma.derivative(-t * z) * pos + sigma.derivative(t * z) * neg;
          },
          scales);
      double num = 0.0;
      if (mode == GapMode::MultiLabel) {
        const double le2 = engine.expect(
            [&](double z) {
              const auto [pos, neg] = phi(ts * z);
              const double le = sigma(t * z) * neg - sigma(-t * z) * pos;
              return le * le;
            },
            scales);
        const double vbar = engine.expect(
            [&](double z) {
              const double w = sigma(t * z) + sigma(-t * z);
              double v = 0.0;
              for (const auto& l : model.links) v += l(ts * z) * l.complement(ts * z);
              return v / static_cast<double>(model.links.size()) * w * w;
            },
            scales);
        num = le2 + vbar / m;
      } else {
        num = engine.expect(
            [&](double z) {
              const auto [pos, neg] = phi(ts * z);
              const double a = sigma(-t * z);
              const double b = sigma(t * z);
              return a * a * pos + b * b * neg;
            },
            scales);
      }
      out.t_m = t;
      out.variance_multiplier = num / (t * t * he * he);
      break;
    }
    case PredictionKind::WellSpecified: {
      if (!model.identical_links()) throw InvalidArgument("well-specified prediction needs identical links");
      const LinkSpec& l = model.links.front();
      const double scale = 1.0 / ts;
      const std::span<const double> sc(&scale, 1);
      const double v = engine.expect([&](double z) { return l(ts * z) * l.complement(ts * z); }, sc);
      const double slope = engine.expect([&](double z) { return l.derivative(ts * z); }, sc);
      out.t_m = ts;
      out.variance_multiplier = v / (slope * slope) / (m * ts * ts);
      break;
    }
    case PredictionKind::Semiparametric: {
      const double scale = 1.0 / ts;
      const std::span<const double> sc(&scale, 1);
      double v = 0.0;
      double slope = 0.0;
      for (const auto& l : model.links) {
        v += engine.expect([&](double z) { return l(ts * z) * l.complement(ts * z); }, sc);
        slope += ts * engine.expect([&](double z) { return l.derivative(ts * z); }, sc);
      }
      v /= m;
      slope /= m;
      out.t_m = ts;
      out.variance_multiplier = v / (slope * slope) / m;
      break;
    }
    case PredictionKind::Crowdsourcing: {
      const Eigen::VectorXd alpha = detail::crowd_alpha(in);
      double s = 0.0;
      for (Eigen::Index j = 0; j < alpha.size(); ++j) s += detail::logistic_variance(engine, alpha(j) * ts);
      out.t_m = ts;
      out.variance_multiplier = 1.0 / (ts * ts * s);
      break;
    }
  }
  out.covariance = out.variance_multiplier * projected_sigma_pinv(model.covariates, model.u_star());
  return out;
}

struct LargeMConstants {
  double a = 0.0;
  double b = 0.0;
};

/// Limits t_m / (t* sqrt(m)) -> a and m^{1 - beta/2} C_m(t*) -> t*^{beta - 2} b.
inline LargeMConstants largem_constants(double beta, double c_z, const LinkSpec& sigma, double avg_slope0,
                                        double rel_tol = 1e-9) {
  if (!(beta > 0.0)) throw DivergentIntegral("z^{beta-1} is not integrable at 0 unless beta > 0");
  if (!(avg_slope0 > 0.0)) throw InvalidArgument("average link slope at 0 must be positive");
  using detail::normal_cdf;
  const double s2 = 2.0 * avg_slope0;
  auto pw = [](double z, double e) { return std::exp(e * std::log(z)); };

  const double slope_scale = 1.0;
  const double far = 1e4;
  const double slope_tail = pw(far, beta) * sigma.derivative(far);
  const double denom = integrate_positive([&](double z) { return pw(z, beta - 1.0) * sigma.derivative(z); },
                                          std::span<const double>(&slope_scale, 1), beta, rel_tol);
  if (!std::isfinite(denom) || slope_tail > 1e-6 * denom)
    throw DivergentIntegral("integral of z^{beta-1} sigma'(z) does not converge");

  const std::vector<double> sc1{1.0, 1.0 / s2};
  const double i1 = integrate_positive([&](double z) { return pw(z, beta) * sigma(-z); }, sc1, 1.0, rel_tol);
  const double i2 = integrate_positive([&](double z) { return pw(z, beta) * normal_cdf(-s2 * z); }, sc1, 1.0, rel_tol);
  LargeMConstants out;
  out.a = std::pow(i1 / i2, 1.0 / (beta + 1.0));
  const double a = out.a;
  const std::vector<double> sc2{1.0, 1.0 / a, 1.0 / s2};
  const double num = integrate_positive(
      [&](double z) {
        const double lo = sigma(-a * z);
        const double hi = sigma(a * z);
        return pw(z, beta - 1.0) * (lo * lo + (hi * hi - lo * lo) * normal_cdf(-s2 * z));
      },
      sc2, beta, rel_tol);
  out.b = std::pow(a, 2.0 * beta - 2.0) * num / (c_z * denom * denom);
  return out;
}

struct LimitCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double relative_gap() const { return (lhs - rhs) / rhs; }
};

/// m^{beta/2} E[f(sqrt(m)|Z|)(1 - rho_m(cZ))] against c_Z int z^{beta-1} f(z) Phi(-2 s c z) dz,
/// s the average true-link slope at 0.
template <class F>
LimitCheck largem_rho_limit_check(const CovariateDistribution& dist, F f, double c, const LinkSpec& link,
                                  int m = 4096, EngineOptions opts = {}) {
  const double beta = dist.beta();
  const double s = link.derivative(0.0);
  const MajorityLinks maj({link}, m);
  const ZExpectationEngine engine(dist, opts);
  const double rm = std::sqrt(static_cast<double>(m));
  const std::vector<double> scales{1.0 / rm, 1.0 / (c * rm), 1.0 / c};
  LimitCheck out;
  out.lhs = std::pow(static_cast<double>(m), 0.5 * beta) *
            engine.expect_abs([&](double z) { return f(rm * z) * maj.rho_complement(c * z); }, scales);
  const std::vector<double> sc{1.0, 1.0 / (2.0 * s * c)};
  out.rhs = dist.c_z() * integrate_positive(
                             [&](double z) {
                               return std::pow(z, beta - 1.0) * f(z) * detail::normal_cdf(-2.0 * s * c * z);
                             },
                             sc, beta, opts.rel_tol);
  return out;
}

/// t^beta E[f(t|Z|)] against c_Z int z^{beta-1} f(z) dz.
template <class F>
LimitCheck t_z_limit_check(const CovariateDistribution& dist, F f, double t, EngineOptions opts = {}) {
  const double beta = dist.beta();
  const ZExpectationEngine engine(dist, opts);
  const std::vector<double> scales{1.0 / t};
  LimitCheck out;
  out.lhs = std::pow(t, beta) * engine.expect_abs([&](double z) { return f(t * z); }, scales);
  const double one = 1.0;
  out.rhs = dist.c_z() * integrate_positive([&](double z) { return std::pow(z, beta - 1.0) * f(z); },
                                            std::span<const double>(&one, 1), beta, opts.rel_tol);
  return out;
}

struct MatchingGrid {
  double lo = -20.0;
  double hi = 20.0;
  int nodes = 2001;
};

/// sigma_bar(s) = T_mbar^{-1}(T_m(sigma*((||theta*|| / ||theta_bar||) s))): majority votes of
/// mbar labelers under (sigma_bar, theta_bar) match those of m labelers under (sigma*, theta*).
inline LinkSpec construct_matching_link(const LinkSpec& sigma_star, const Eigen::VectorXd& theta_star, int m,
                                        const Eigen::VectorXd& theta_bar, int m_bar, MatchingGrid grid = {}) {
  if (m < 1 || m_bar < 1) throw InvalidArgument("labeler counts must be >= 1");
  if (theta_star.size() != theta_bar.size()) throw DimensionMismatch("theta* and theta_bar differ in length");
  const double ns = theta_star.norm();
  const double nb = theta_bar.norm();
  if (!(ns > 0.0) || !(nb > 0.0)) throw InvalidArgument("theta* and theta_bar must be nonzero");
  if ((theta_star / ns - theta_bar / nb).norm() > 1e-12)
    throw InvalidArgument("theta_bar must point in the direction of theta*");
  if (grid.nodes < 3 || grid.nodes % 2 == 0 || !(grid.hi > 0.0) || grid.lo != -grid.hi)
    throw InvalidArgument("matching grid must be symmetric with an odd node count");

  const double scale = ns / nb;
  auto value = [&](double s) {
    const VoteProbabilities v = majority_probabilities_iid(sigma_star(scale * s), sigma_star.complement(scale * s), m);
    return v.positive > 0.5 ? 1.0 - binom_tail_inverse(v.negative, m_bar) : binom_tail_inverse(v.positive, m_bar);
  };
  const int n = grid.nodes;
  const int mid = n / 2;
  const double h = (grid.hi - grid.lo) / (n - 1);
  std::vector<double> xs(static_cast<std::size_t>(n));
  std::vector<double> vs(static_cast<std::size_t>(n));
  const bool sym = sigma_star.symmetric();
  for (int k = 0; k < n; ++k) xs[static_cast<std::size_t>(k)] = (k - mid) * h;
  for (int k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (k == mid) vs[kk] = 0.5;
    else if (sym && k < mid) continue;
    else vs[kk] = value(xs[kk]);
  }
  if (sym)
    for (int k = 0; k < mid; ++k)
      vs[static_cast<std::size_t>(k)] = 1.0 - vs[static_cast<std::size_t>(n - 1 - k)];
  double lip = 0.0;
  for (int k = 1; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    lip = std::max(lip, (vs[kk] - vs[kk - 1]) / (xs[kk] - xs[kk - 1]));
  }
  return LinkSpec::tabulated(std::move(xs), std::move(vs), std::max(lip, 1e-12) * (1.0 + 1e-9), sym);
}

/// Largest |P(vote = +1)| difference between (sigma*, theta*, m) and (sigma_bar, theta_bar, mbar)
/// over `points` grid nodes, both sides by the Poisson-binomial recurrence.
inline double impossibility_discrepancy(const LinkSpec& sigma_star, double t_star, int m, double t_bar, int m_bar,
                                        int points = 200, MatchingGrid grid = {}) {
  Eigen::VectorXd ts = Eigen::VectorXd::Unit(1, 0) * t_star;
  Eigen::VectorXd tb = Eigen::VectorXd::Unit(1, 0) * t_bar;
  const LinkSpec bar = construct_matching_link(sigma_star, ts, m, tb, m_bar, grid);
  const auto xs = bar.grid();
  const std::size_t n = xs.size();
  double worst = 0.0;
  for (int k = 0; k < points; ++k) {
    const std::size_t idx = points == 1 ? n / 2 : static_cast<std::size_t>(k) * (n - 1) / static_cast<std::size_t>(points - 1);
    const double s = xs[idx];
    const double t = s * t_star / t_bar;
    const std::vector<double> p(static_cast<std::size_t>(m), sigma_star(t));
    const std::vector<double> q(static_cast<std::size_t>(m), sigma_star.complement(t));
    const std::vector<double> pb(static_cast<std::size_t>(m_bar), bar(s));
    const std::vector<double> qb(static_cast<std::size_t>(m_bar), 1.0 - bar(s));
    const double lhs = majority_probabilities(p, q).positive;
    const double rhs = majority_probabilities(pb, qb).positive;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

}  // namespace mlabel
