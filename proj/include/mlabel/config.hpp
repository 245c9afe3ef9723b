#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/errors.hpp"
#include "mlabel/montecarlo.hpp"

namespace mlabel {

/// Plain `key = value` experiment description. `#` starts a comment.
///
/// Model keys: d, t_star, m, link (logistic | scaled:<alpha>), alphas (comma list of
/// per-labeler scaled-logistic alphas, overrides link and m), covariates (gaussian | beta),
/// beta. Run keys: estimators, model_link, n, trials, seed, split_fraction, m_values
/// (comma list; turns the run into a scaling study), threads, output.
/// Numerics: quadrature, gh_order, rel_tol, max_iters, grad_tol, divergence_threshold,
/// ridge, lipschitz, enforce_symmetry, grid_size.
class SimulationConfig {
 public:
  SimulationConfig() : values_(defaults()) { build(); }

  static std::map<std::string, std::string> defaults() {
    return {
        {"d", "5"},
        {"t_star", "1"},
        {"m", "1"},
        {"link", "logistic"},
        {"alphas", ""},
        {"covariates", "gaussian"},
        {"beta", "1"},
        {"estimators", "multilabel"},
        {"model_link", "logistic"},
        {"n", "10000"},
        {"trials", "200"},
        {"seed", "1"},
        {"split_fraction", "0.1"},
        {"m_values", ""},
        {"threads", "0"},
        {"output", "mlabel_out"},
        {"quadrature", "adaptive"},
        {"gh_order", "64"},
        {"rel_tol", "1e-9"},
        {"max_iters", "200"},
        {"grad_tol", "1e-10"},
        {"divergence_threshold", "1e4"},
        {"ridge", "0"},
        {"lipschitz", "1"},
        {"enforce_symmetry", "true"},
        {"grid_size", "512"},
    };
  }

  static SimulationConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str(), path);
  }

  static SimulationConfig from_string(const std::string& text, const std::string& origin = "<config>") {
    SimulationConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      cfg.set(key, value, origin + ":" + std::to_string(lineno));
    }
    cfg.build();
    return cfg;
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "<override>") {
    if (!values_.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    values_[key] = value;
  }

  /// Validates every value and assembles the experiment.
  void build() {
    ExperimentConfig e;
    const int d = static_cast<int>(get_int("d"));
    const double t = get_double("t_star");
    if (d < 1) throw ConfigError("d must be >= 1");
    if (!(t > 0.0)) throw ConfigError("t_star must be > 0");
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
    theta(0) = t;
    e.model.theta_star = theta;

    const std::string alphas = values_.at("alphas");
    try {
      if (!alphas.empty()) {
        for (double a : split_doubles(alphas, "alphas")) e.model.links.push_back(LinkSpec::scaled_logistic(a));
      } else {
        const long long m = get_int("m");
        if (m < 1) throw ConfigError("m must be >= 1");
        e.model.links.assign(static_cast<std::size_t>(m), parse_link(values_.at("link"), "link"));
      }
      e.model_link = parse_link(values_.at("model_link"), "model_link");
    } catch (const InvalidArgument& ex) {
      throw ConfigError(ex.what());
    }

    const std::string cov = values_.at("covariates");
    const double beta = get_double("beta");
    if (!(beta > 0.0))
      throw ConfigError("beta = " + values_.at("beta") +
                        " is invalid: the margin density regularity condition requires beta > 0");
    if (cov == "gaussian") {
      if (beta != 1.0) throw ConfigError("gaussian covariates have beta = 1; use covariates = beta for other values");
      e.model.covariates = CovariateDistribution::gaussian(d);
    } else if (cov == "beta") {
      Eigen::VectorXd dir = Eigen::VectorXd::Unit(d, 0);
      e.model.covariates = CovariateDistribution::beta_regular(d, beta, dir);
    } else {
      throw ConfigError("covariates must be 'gaussian' or 'beta'");
    }

    e.estimators.clear();
    try {
      for (const auto& s : split(values_.at("estimators"))) e.estimators.push_back(parse_estimator(s));
    } catch (const InvalidArgument& ex) {
      throw ConfigError(ex.what());
    }
    const long long n = get_int("n");
    if (n < 1) throw ConfigError("n must be >= 1");
    e.n = static_cast<std::size_t>(n);
    e.trials = static_cast<int>(get_int("trials"));
    e.seed = static_cast<std::uint64_t>(get_int("seed"));
    e.split_fraction = get_double("split_fraction");
    const long long threads = get_int("threads");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    e.threads = static_cast<unsigned>(threads);
    e.output = values_.at("output");

    const std::string q = values_.at("quadrature");
    if (q == "adaptive") e.engine.method = QuadratureMethod::Adaptive;
    else if (q == "gauss-hermite") e.engine.method = QuadratureMethod::GaussHermite;
    else throw ConfigError("quadrature must be 'adaptive' or 'gauss-hermite'");
    e.engine.gh_order = static_cast<int>(get_int("gh_order"));
    e.engine.rel_tol = get_double("rel_tol");
    e.solver.max_iters = static_cast<int>(get_int("max_iters"));
    e.solver.grad_tol = get_double("grad_tol");
    e.solver.divergence_threshold = get_double("divergence_threshold");
    e.solver.ridge = get_double("ridge");
    e.isotonic.lipschitz = get_double("lipschitz");
    e.isotonic.enforce_symmetry = get_bool("enforce_symmetry");
    e.isotonic.grid_size = static_cast<int>(get_int("grid_size"));

    m_values_.clear();
    if (!values_.at("m_values").empty())
      for (double v : split_doubles(values_.at("m_values"), "m_values")) m_values_.push_back(static_cast<int>(v));

    try {
      e.validate();
      e.isotonic.validate();
      if (e.split_fraction <= 0.0 || e.split_fraction >= 1.0) throw InvalidArgument("split_fraction must lie in (0, 1)");
      if (!m_values_.empty() && !alphas.empty()) throw InvalidArgument("m_values cannot be combined with alphas");
    } catch (const InvalidArgument& ex) {
      throw ConfigError(ex.what());
    }
    experiment_ = std::move(e);
  }

  const ExperimentConfig& experiment() const { return experiment_; }
  const std::vector<int>& m_values() const { return m_values_; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Every key with its resolved value, one `key=value` per line, sorted by key.
  std::vector<std::string> resolved_lines() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k + "=" + v);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static double to_double(const std::string& s, const std::string& key) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + s + "' is not a number");
    }
  }

  static std::vector<double> split_doubles(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split(s)) out.push_back(to_double(item, key));
    return out;
  }

  static LinkSpec parse_link(const std::string& s, const std::string& key) {
    if (s == "logistic") return LinkSpec::logistic();
    if (s.rfind("scaled:", 0) == 0) return LinkSpec::scaled_logistic(to_double(s.substr(7), key));
    throw ConfigError(key + " must be 'logistic' or 'scaled:<alpha>'");
  }

  double get_double(const std::string& key) const { return to_double(values_.at(key), key); }

  long long get_int(const std::string& key) const {
    const std::string& s = values_.at(key);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      // accept integral values written in float notation, e.g. 1e4
      const double v = to_double(s, key);
      if (v != static_cast<double>(static_cast<long long>(v))) throw ConfigError(key + ": '" + s + "' is not an integer");
      return static_cast<long long>(v);
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& s = values_.at(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(key + ": expected true or false");
  }

  std::map<std::string, std::string> values_;
  ExperimentConfig experiment_;
  std::vector<int> m_values_;
};

}  // namespace mlabel
