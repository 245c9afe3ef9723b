#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/tools/roots.hpp>

#include "mlabel/errors.hpp"
#include "mlabel/link.hpp"

namespace mlabel {

/// P(vote = +1) and P(vote = -1); each side is summed directly so tails keep
/// full relative accuracy.
struct VoteProbabilities {
  double positive = 0.5;
  double negative = 0.5;
};

/// Poisson-binomial majority with a fair tie-break. p[j] = P(Y_j = +1) and
/// q[j] = 1 - p[j], supplied separately to avoid cancellation.
inline VoteProbabilities majority_probabilities(std::span<const double> p, std::span<const double> q) {
  const std::size_t m = p.size();
  if (m == 0) throw InvalidArgument("majority needs at least one labeler");
  if (q.size() != m) throw DimensionMismatch("p and q differ in length");
  std::vector<double> pmf(m + 1, 0.0);
  pmf[0] = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = j + 1; k > 0; --k) pmf[k] = pmf[k] * q[j] + pmf[k - 1] * p[j];
    pmf[0] *= q[j];
  }
  VoteProbabilities out{0.0, 0.0};
  for (std::size_t k = 0; k <= m; ++k) {
    if (2 * k > m) out.positive += pmf[k];
    else if (2 * k < m) out.negative += pmf[k];
    else {
      out.positive += 0.5 * pmf[k];
      out.negative += 0.5 * pmf[k];
    }
  }
  return out;
}

/// Same quantity for m identical labelers with P(+1) = p.
inline VoteProbabilities majority_probabilities_iid(double p, double q, int m) {
  if (m < 1) throw InvalidArgument("majority needs m >= 1");
  if (p <= 0.0) return {0.0, 1.0};
  if (q <= 0.0) return {1.0, 0.0};
  using boost::math::binomial_distribution;
  auto side = [m](double prob) {
    // P(count > m/2) + 1/2 P(count = m/2)
    const binomial_distribution<double> bin(m, prob);
    if (m % 2 == 1) return boost::math::cdf(boost::math::complement(bin, (m - 1) / 2));
    return boost::math::cdf(boost::math::complement(bin, m / 2)) + 0.5 * boost::math::pdf(bin, m / 2);
  };
  return {side(p), side(q)};
}

/// Majority-vote label law for a fixed set of labeler links.
class MajorityLinks {
 public:
  /// `links` holds either m links or a single link shared by all m labelers.
  MajorityLinks(std::vector<LinkSpec> links, int m) : links_(std::move(links)), m_(m) {
    if (m < 1) throw InvalidArgument("majority needs m >= 1");
    if (links_.empty()) throw InvalidArgument("majority needs at least one link");
    if (links_.size() != 1 && static_cast<int>(links_.size()) != m)
      throw DimensionMismatch("need one link or m links");
    identical_ = true;
    for (const auto& l : links_)
      if (!l.same_as(links_.front())) identical_ = false;
    if (!identical_) {
      p_.resize(links_.size());
      q_.resize(links_.size());
    }
  }

  int m() const { return m_; }

  /// Vote law given the margin <theta*, x> = t.
  VoteProbabilities at(double t) const {
    if (identical_) return majority_probabilities_iid(links_.front()(t), links_.front().complement(t), m_);
    for (std::size_t j = 0; j < links_.size(); ++j) {
      p_[j] = links_[j](t);
      q_[j] = links_[j].complement(t);
    }
    return majority_probabilities(p_, q_);
  }

  /// P(vote = sign(t)); the tie-break gives 1/2 at t = 0.
  double rho(double t) const {
    const auto v = at(t);
    return t >= 0.0 ? v.positive : v.negative;
  }

  /// 1 - rho(t) without cancellation.
  double rho_complement(double t) const {
    const auto v = at(t);
    return t >= 0.0 ? v.negative : v.positive;
  }

 private:
  std::vector<LinkSpec> links_;
  int m_;
  bool identical_ = true;
  mutable std::vector<double> p_;
  mutable std::vector<double> q_;
};

inline double rho_m(double t, int m, const std::vector<LinkSpec>& true_links) {
  return MajorityLinks(true_links, m).rho(t);
}

/// T_m(p): probability that a fair-tie majority of m Bernoulli(p) votes is +1.
inline double binom_tail_transform(double p, int m) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("binom_tail_transform needs p in [0, 1]");
  if (p > 0.5) return 1.0 - majority_probabilities_iid(1.0 - p, p, m).positive;
  return majority_probabilities_iid(p, 1.0 - p, m).positive;
}

inline double binom_tail_inverse(double y, int m) {
  if (!(y >= 0.0 && y <= 1.0)) throw InvalidArgument("binom_tail_inverse needs y in [0, 1]");
  if (m < 1) throw InvalidArgument("binom_tail_inverse needs m >= 1");
  if (y == 0.0 || y == 1.0 || m == 1) return y;
  if (y > 0.5) return 1.0 - binom_tail_inverse(1.0 - y, m);
  std::uintmax_t iters = 200;
  auto f = [&](double p) { return binom_tail_transform(p, m) - y; };
  const auto r = boost::math::tools::toms748_solve(f, 0.0, 0.5, -y, 0.5 - y,
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace mlabel
