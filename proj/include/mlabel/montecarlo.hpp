#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/datagen.hpp"
#include "mlabel/errors.hpp"
#include "mlabel/estimators.hpp"
#include "mlabel/model.hpp"
#include "mlabel/rng.hpp"
#include "mlabel/semiparam.hpp"
#include "mlabel/theory.hpp"

namespace mlabel {

enum class EstimatorKind { MultiLabel, Majority, Semiparam, Crowd };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::MultiLabel: return "multilabel";
    case EstimatorKind::Majority: return "majority";
    case EstimatorKind::Semiparam: return "semiparam";
    case EstimatorKind::Crowd: return "crowd";
  }
  return "unknown";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  if (s == "multilabel") return EstimatorKind::MultiLabel;
  if (s == "majority") return EstimatorKind::Majority;
  if (s == "semiparam") return EstimatorKind::Semiparam;
  if (s == "crowd") return EstimatorKind::Crowd;
  throw InvalidArgument("unknown estimator '" + s + "'");
}

struct ExperimentConfig {
  ModelSpec model;
  std::vector<EstimatorKind> estimators{EstimatorKind::MultiLabel};
  LinkSpec model_link = LinkSpec::logistic();
  std::size_t n = 10000;
  int trials = 200;
  std::uint64_t seed = 1;
  double split_fraction = 0.1;
  unsigned threads = 0;
  EngineOptions engine;
  SolverOptions solver;
  IsotonicFitOptions isotonic;
  std::string output;

  void validate() const {
    model.validate();
    if (trials < 2) throw InvalidArgument("experiment needs trials >= 2");
    if (n < static_cast<std::size_t>(model.d()) + 1) throw InvalidArgument("experiment needs n >= d + 1");
    if (estimators.empty()) throw InvalidArgument("experiment needs at least one estimator");
    for (auto k : estimators)
      if (k == EstimatorKind::Semiparam) model.require_unit_norm();
  }
};

struct TrialRecord {
  int trial = 0;
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd u_hat;
  int iterations = 0;
  std::size_t n_eff = 0;
  bool separable = false;
  bool degenerate = false;
  bool failed = false;

  bool excluded() const { return separable || degenerate || failed; }
};

struct TrialSummary {
  EstimatorKind kind = EstimatorKind::MultiLabel;
  std::vector<TrialRecord> trials;
  std::size_t n_eff = 0;
  int excluded_count = 0;
  Eigen::MatrixXd empirical_cov;
  TheoryPrediction theory;
  double empirical_multiplier = 0.0;
  double relative_error = 0.0;
};

namespace detail {

inline PredictionKind prediction_for(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::MultiLabel: return PredictionKind::MultiLabelExact;
    case EstimatorKind::Majority: return PredictionKind::MajorityVoteExact;
    case EstimatorKind::Semiparam: return PredictionKind::Semiparametric;
    case EstimatorKind::Crowd: return PredictionKind::Crowdsourcing;
  }
  return PredictionKind::MultiLabelExact;
}

inline TrialRecord run_estimator(const ExperimentConfig& cfg, EstimatorKind kind, const MultiLabelDataset& data,
                                 int trial) {
  TrialRecord rec;
  rec.trial = trial;
  const auto t = static_cast<std::uint64_t>(trial);
  try {
    FitResult r;
    switch (kind) {
      case EstimatorKind::MultiLabel:
        r = fit(LossSpec::multi_label(cfg.model_link), data, cfg.solver);
        rec.n_eff = data.n();
        break;
      case EstimatorKind::Majority:
        r = fit(LossSpec::majority_vote(cfg.model_link, stream_seed(cfg.seed, t, Stream::TieBreak)), data,
                cfg.solver);
        rec.n_eff = data.n();
        break;
      case EstimatorKind::Semiparam: {
        SemiparamOptions o;
        o.split_fraction = cfg.split_fraction;
        o.seed = stream_seed(cfg.seed, t, Stream::Split);
        o.isotonic = cfg.isotonic;
        o.solver = cfg.solver;
        const SemiparamResult s = semiparametric_fit(data, o);
        r = s.fit;
        rec.n_eff = s.stage2_rows;
        for (bool d : s.links.degenerate) rec.degenerate = rec.degenerate || d;
        rec.separable = s.initial.separable;
        break;
      }
      case EstimatorKind::Crowd: {
        const CrowdResult c = crowd_pipeline(data, cfg.split_fraction, stream_seed(cfg.seed, t, Stream::Split), cfg.solver);
        r = c.fit;
        rec.n_eff = c.stage2_rows;
        rec.separable = c.reference.separable;
        for (bool f : c.alpha.flagged) rec.degenerate = rec.degenerate || f;
        break;
      }
    }
    rec.theta_hat = r.theta_hat;
    rec.u_hat = r.u_hat;
    rec.iterations = r.iterations;
    rec.separable = rec.separable || r.separable;
  } catch (const NonConvergence&) {
    rec.failed = true;
  }
  return rec;
}

inline void summarize(TrialSummary& s, const ExperimentConfig& cfg) {
  const Eigen::VectorXd u = cfg.model.u_star();
  const Eigen::Index d = u.size();
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(d, d) - u * u.transpose();
  std::vector<const TrialRecord*> kept;
  for (const auto& r : s.trials) {
    if (r.excluded()) ++s.excluded_count;
    else kept.push_back(&r);
  }
  if (s.excluded_count > 0.2 * static_cast<double>(s.trials.size()) || kept.size() < 2)
    throw TooFewIncludedTrials(to_string(s.kind) + ": " + std::to_string(s.excluded_count) + " of " +
                               std::to_string(s.trials.size()) + " trials excluded (cap 20%)");
  s.n_eff = kept.front()->n_eff;
  const double scale = std::sqrt(static_cast<double>(s.n_eff));
  Eigen::MatrixXd D(static_cast<Eigen::Index>(kept.size()), d);
  for (std::size_t k = 0; k < kept.size(); ++k) D.row(static_cast<Eigen::Index>(k)) = scale * (kept[k]->u_hat - u).transpose();
  const Eigen::RowVectorXd mean = D.colwise().mean();
  D.rowwise() -= mean;
  const Eigen::MatrixXd C = D.transpose() * D / static_cast<double>(kept.size() - 1);
  Eigen::MatrixXd PC = P * C * P;
  s.empirical_cov = 0.5 * (PC + PC.transpose());

  TheoryInputs in;
  in.model = cfg.model;
  in.model_link = cfg.model_link;
  in.engine = cfg.engine;
  s.theory = predict_covariance(prediction_for(s.kind), in);
  const double base_trace = s.theory.covariance.trace() / s.theory.variance_multiplier;
  s.empirical_multiplier = s.empirical_cov.trace() / base_trace;
  s.relative_error = (s.empirical_cov - s.theory.covariance).norm() / s.theory.covariance.norm();
}

}  // namespace detail

/// Runs `trials` seeded replications; every estimator sees the same dataset in a given trial.
inline std::vector<TrialSummary> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const int T = cfg.trials;
  const std::size_t E = cfg.estimators.size();
  std::vector<TrialSummary> out(E);
  for (std::size_t e = 0; e < E; ++e) {
    out[e].kind = cfg.estimators[e];
    out[e].trials.resize(static_cast<std::size_t>(T));
  }

  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int t = next++; t < T; t = next++) {
      try {
        const MultiLabelDataset data =
            sample_dataset(cfg.model, cfg.n, stream_seed(cfg.seed, static_cast<std::uint64_t>(t), Stream::MonteCarlo));
        for (std::size_t e = 0; e < E; ++e)
          out[e].trials[static_cast<std::size_t>(t)] = detail::run_estimator(cfg, cfg.estimators[e], data, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = T;
      }
    }
  };
  unsigned threads = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(T));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  for (auto& s : out) detail::summarize(s, cfg);
  return out;
}

struct ScalingRow {
  int m = 0;
  double empirical_multiplier = 0.0;
  double theory_multiplier = 0.0;
  double t_m = 0.0;
  double relative_error = 0.0;
  int excluded = 0;
};

struct ScalingTable {
  EstimatorKind kind = EstimatorKind::MultiLabel;
  std::vector<ScalingRow> rows;
  double empirical_slope = 0.0;
  double theory_slope = 0.0;
};

/// Least-squares slope of log(y) on log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope needs two or more points");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(y[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Repeats `base` with m copies of its (shared) true link for each m; one table per estimator.
inline std::vector<ScalingTable> scaling_study(
    const ExperimentConfig& base, const std::vector<int>& m_values,
    const std::function<void(int, const std::vector<TrialSummary>&)>& on_run = {}) {
  if (m_values.empty()) throw InvalidArgument("scaling study needs m values");
  for (std::size_t k = 1; k < m_values.size(); ++k)
    if (m_values[k] <= m_values[k - 1]) throw InvalidArgument("m values must be strictly ascending");
  if (!base.model.identical_links()) throw InvalidArgument("scaling study needs identical true links");
  std::vector<ScalingTable> tables(base.estimators.size());
  for (std::size_t e = 0; e < tables.size(); ++e) tables[e].kind = base.estimators[e];
  for (int m : m_values) {
    if (m < 1) throw InvalidArgument("m must be >= 1");
    ExperimentConfig cfg = base;
    cfg.model.links.assign(static_cast<std::size_t>(m), base.model.links.front());
    cfg.seed = stream_seed(base.seed, static_cast<std::uint64_t>(m), Stream::MonteCarlo);
    const auto summaries = run_experiment(cfg);
    if (on_run) on_run(m, summaries);
    for (std::size_t e = 0; e < summaries.size(); ++e) {
      const auto& s = summaries[e];
      tables[e].rows.push_back({m, s.empirical_multiplier, s.theory.variance_multiplier, s.theory.t_m,
                                s.relative_error, s.excluded_count});
    }
  }
  for (auto& t : tables) {
    std::vector<double> ms, emp, th;
    for (const auto& r : t.rows) {
      ms.push_back(r.m);
      emp.push_back(r.empirical_multiplier);
      th.push_back(r.theory_multiplier);
    }
    if (ms.size() >= 2) {
      t.empirical_slope = loglog_slope(ms, emp);
      t.theory_slope = loglog_slope(ms, th);
    }
  }
  return tables;
}

}  // namespace mlabel
