#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlabel/mlabel.hpp"

namespace {

using namespace mlabel;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTrials = 3;

std::vector<std::string> metadata(const SimulationConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& line : cfg.resolved_lines())
    if (line.rfind("threads=", 0) != 0) out.push_back(line);
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write output file '" + path + "'");
  return out;
}

int cmd_simulate(const std::string& path, bool print_config, int threads) {
  SimulationConfig cfg = path.empty() ? SimulationConfig() : SimulationConfig::from_file(path);
  if (threads >= 0) {
    cfg.set("threads", std::to_string(threads));
    cfg.build();
  }
  if (print_config) {
    for (const auto& line : cfg.resolved_lines()) std::cout << line << '\n';
    return kExitOk;
  }
  if (path.empty()) throw ConfigError("simulate needs a config file");
  const ExperimentConfig& exp = cfg.experiment();
  const auto meta = metadata(cfg);
  auto trials = open_output(exp.output + "_trials.csv");
  auto summary = open_output(exp.output + "_summary.csv");
  write_preamble(trials, meta);
  write_preamble(summary, meta);
  write_summary_header(summary);
  bool first = true;
  auto emit = [&](int m, const std::vector<TrialSummary>& s) {
    if (first) {
      std::ostringstream header;
      write_trials_csv(header, {}, m, exp.model.d());
      trials << header.str();
      first = false;
    }
    std::ostringstream body;
    write_trials_csv(body, s, m, exp.model.d());
    const std::string text = body.str();
    trials << text.substr(text.find('\n') + 1);
    write_summary_rows(summary, s, m);
  };
  if (cfg.m_values().empty()) {
    emit(exp.model.m(), run_experiment(exp));
  } else {
    const auto tables = scaling_study(exp, cfg.m_values(), emit);
    auto slopes = open_output(exp.output + "_slopes.csv");
    write_preamble(slopes, meta);
    write_slopes_csv(slopes, tables);
  }
  std::cerr << "wrote " << exp.output << "_summary.csv\n";
  return kExitOk;
}

LinkSpec parse_link_flag(const std::string& s) {
  if (s == "logistic") return LinkSpec::logistic();
  if (s.rfind("scaled:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double a = std::stod(s.substr(7), &used);
      if (used == s.size() - 7) return LinkSpec::scaled_logistic(a);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("link must be 'logistic' or 'scaled:<alpha>'");
}

struct TheoryFlags {
  std::string kind = "well-specified";
  int m = 1;
  int d = 5;
  double tstar = 1.0;
  double beta = 1.0;
  std::string true_link = "logistic";
  std::string model_link = "logistic";
  std::vector<double> alpha;
  bool impossibility = false;
  int mbar = 1;
  double tbar = 1.0;
  bool largem = false;
};

int cmd_theory(const TheoryFlags& f) {
  if (!(f.beta > 0.0)) throw ConfigError("beta must be > 0 (margin density regularity)");
  if (f.impossibility) {
    const double gap = impossibility_discrepancy(parse_link_flag(f.true_link), f.tstar, f.m, f.tbar, f.mbar);
    std::cout << "m,mbar,t_star,t_bar,max_discrepancy\n"
              << f.m << ',' << f.mbar << ',' << fmt(f.tstar) << ',' << fmt(f.tbar) << ',' << fmt(gap) << '\n';
    return kExitOk;
  }
  TheoryInputs in;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(f.d);
  theta(0) = f.tstar;
  in.model.theta_star = theta;
  if (!f.alpha.empty()) {
    for (double a : f.alpha) in.model.links.push_back(LinkSpec::scaled_logistic(a));
  } else {
    if (f.m < 1) throw ConfigError("m must be >= 1");
    in.model.links.assign(static_cast<std::size_t>(f.m), parse_link_flag(f.true_link));
  }
  in.model.covariates = f.beta == 1.0 ? CovariateDistribution::gaussian(f.d)
                                      : CovariateDistribution::beta_regular(f.d, f.beta, Eigen::VectorXd::Unit(f.d, 0));
  in.model_link = parse_link_flag(f.model_link);
  if (f.largem) {
    const auto c = largem_constants(in.model.covariates.beta(), in.model.covariates.c_z(), in.model_link,
                                    in.model.links.front().derivative(0.0));
    std::cout << "beta,a,b\n" << fmt(in.model.covariates.beta()) << ',' << fmt(c.a) << ',' << fmt(c.b) << '\n';
    return kExitOk;
  }
  PredictionKind kind;
  if (f.kind == "multilabel") kind = PredictionKind::MultiLabelExact;
  else if (f.kind == "majority") kind = PredictionKind::MajorityVoteExact;
  else if (f.kind == "well-specified") kind = PredictionKind::WellSpecified;
  else if (f.kind == "semiparam") kind = PredictionKind::Semiparametric;
  else if (f.kind == "crowd") kind = PredictionKind::Crowdsourcing;
  else throw ConfigError("unknown --kind '" + f.kind + "'");
  const TheoryPrediction p = predict_covariance(kind, in);
  const bool crowd = kind == PredictionKind::Crowdsourcing;
  std::cout << "kind,m,t_star,beta,t_m,multiplier" << (crowd ? ",sandwich_multiplier" : "") << '\n'
            << f.kind << ',' << in.model.m() << ',' << fmt(f.tstar) << ',' << fmt(f.beta) << ',' << fmt(p.t_m) << ','
            << fmt(p.variance_multiplier);
  if (crowd) std::cout << ',' << fmt(crowd_sandwich_multiplier(in));
  std::cout << '\n';
  return kExitOk;
}

struct SemiparamFlags {
  std::string data;
  int labels = -1;
  double split = 0.1;
  std::uint64_t seed = 0;
  double lipschitz = 1.0;
  int grid = 512;
  bool no_symmetry = false;
  std::string links_out;
};

int cmd_semiparam(const SemiparamFlags& f) {
  const MultiLabelDataset data = read_dataset_csv(f.data, f.labels);
  SemiparamOptions o;
  o.split_fraction = f.split;
  o.seed = f.seed;
  o.isotonic.lipschitz = f.lipschitz;
  o.isotonic.grid_size = f.grid;
  o.isotonic.enforce_symmetry = !f.no_symmetry;
  const SemiparamResult r = semiparametric_fit(data, o);
  std::cout << "stage1_rows,stage2_rows,separable,iterations";
  for (int k = 0; k < data.d(); ++k) std::cout << ",u_" << k + 1;
  std::cout << '\n' << r.stage1_rows << ',' << r.stage2_rows << ',' << r.fit.separable << ',' << r.fit.iterations;
  for (int k = 0; k < data.d(); ++k) std::cout << ',' << fmt(r.fit.u_hat(k));
  std::cout << '\n';
  if (!f.links_out.empty()) {
    auto out = open_output(f.links_out);
    write_preamble(out, {"split_fraction=" + fmt(f.split), "seed=" + std::to_string(f.seed),
                         "lipschitz=" + fmt(f.lipschitz), "grid_size=" + std::to_string(f.grid),
                         "enforce_symmetry=" + std::string(f.no_symmetry ? "false" : "true")});
    out << "labeler,degenerate,t,sigma\n";
    for (std::size_t j = 0; j < r.links.links.size(); ++j) {
      const auto& l = r.links.links[j];
      for (std::size_t k = 0; k < l.grid().size(); ++k)
        out << j + 1 << ',' << r.links.degenerate[j] << ',' << fmt(l.grid()[k]) << ',' << fmt(l.values()[k]) << '\n';
    }
  }
  return kExitOk;
}

int cmd_ingest(const std::string& path, int labels) {
  const MultiLabelDataset data = read_dataset_csv(path, labels);
  std::cout << "rows,d,m\n" << data.n() << ',' << data.d() << ',' << data.m() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimators, asymptotic theory and Monte Carlo checks for learning from multiple noisy labels"};
  app.require_subcommand(1);

  std::string config_path;
  bool print_config = false;
  int threads = -1;
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo experiment from a key=value config");
  sim->add_option("config", config_path, "config file");
  sim->add_flag("--print-config", print_config, "print the resolved configuration and exit");
  sim->add_option("--threads", threads, "worker threads (0 = logical cores)");

  TheoryFlags tf;
  auto* th = app.add_subcommand("theory", "evaluate predicted covariance multipliers");
  th->add_option("--kind", tf.kind, "multilabel | majority | well-specified | semiparam | crowd");
  th->add_option("--m", tf.m, "labelers");
  th->add_option("--d", tf.d, "dimension");
  th->add_option("--tstar", tf.tstar, "||theta*||");
  th->add_option("--beta", tf.beta, "noise exponent (1 = gaussian)");
  th->add_option("--true-link", tf.true_link, "logistic | scaled:<alpha>");
  th->add_option("--model-link", tf.model_link, "logistic | scaled:<alpha>");
  th->add_option("--alpha", tf.alpha, "per-labeler scaled-logistic alphas")->delimiter(',');
  th->add_flag("--impossibility", tf.impossibility, "check the matching-link construction");
  th->add_option("--mbar", tf.mbar, "labelers of the matching model");
  th->add_option("--tbar", tf.tbar, "||theta_bar|| of the matching model");
  th->add_flag("--largem", tf.largem, "print the large-m constants a and b");

  SemiparamFlags sf;
  auto* sp = app.add_subcommand("semiparam", "two-stage link estimation and refit on a CSV dataset");
  sp->add_option("--data", sf.data, "dataset CSV")->required();
  sp->add_option("--labels", sf.labels, "number of trailing label columns (default: header names y*)");
  sp->add_option("--split", sf.split, "stage-1 fraction");
  sp->add_option("--seed", sf.seed, "split seed");
  sp->add_option("--lipschitz", sf.lipschitz, "Lipschitz bound of the link class");
  sp->add_option("--grid", sf.grid, "link grid size");
  sp->add_flag("--no-symmetry", sf.no_symmetry, "do not impose sigma(t) + sigma(-t) = 1");
  sp->add_option("--links-out", sf.links_out, "write fitted links as CSV");

  std::string ingest_path;
  int ingest_labels = -1;
  auto* ing = app.add_subcommand("ingest", "validate a dataset CSV and print its shape");
  ing->add_option("csv", ingest_path, "dataset CSV")->required();
  ing->add_option("--labels", ingest_labels, "number of trailing label columns");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, print_config, threads);
    if (th->parsed()) return cmd_theory(tf);
    if (sp->parsed()) return cmd_semiparam(sf);
    if (ing->parsed()) return cmd_ingest(ingest_path, ingest_labels);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TooFewIncludedTrials& e) {
    std::cerr << "too few included trials: " << e.what() << '\n';
    return kExitTrials;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
