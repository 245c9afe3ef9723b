#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlabel/errors.hpp"
#include "mlabel/model.hpp"
#include "mlabel/montecarlo.hpp"

namespace mlabel {

inline constexpr int csv_schema_version = 1;

/// Shortest round-trip decimal form; byte-stable for a given value.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Reads `x...,y...` rows. Label columns are those whose header starts with 'y'
/// (they must come last) unless `label_columns` >= 0 fixes their count.
/// Labels {0, 1} are mapped to {-1, +1}.
inline MultiLabelDataset read_dataset_csv(std::istream& in, const std::string& origin = "<csv>",
                                          int label_columns = -1) {
  auto fail = [&](int line, const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + what);
  };
  auto cells = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto a = item.find_first_not_of(" \t\r");
      const auto b = item.find_last_not_of(" \t\r");
      out.push_back(a == std::string::npos ? "" : item.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };

  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    header = cells(line);
    break;
  }
  if (header.empty()) fail(lineno, "missing header row");
  const int cols = static_cast<int>(header.size());
  int m = label_columns;
  if (m < 0) {
    m = 0;
    for (int c = cols - 1; c >= 0 && !header[static_cast<std::size_t>(c)].empty() &&
                           header[static_cast<std::size_t>(c)][0] == 'y';
         --c)
      ++m;
  }
  const int d = cols - m;
  if (m < 1 || d < 1) fail(lineno, "header needs feature columns followed by label columns named y*");

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<std::int8_t>> ys;
  std::vector<int> raw_labels;
  bool saw_zero = false;
  bool saw_minus = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto row = cells(line);
    if (static_cast<int>(row.size()) != cols)
      fail(lineno, "expected " + std::to_string(cols) + " fields, found " + std::to_string(row.size()));
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
      const std::string& s = row[static_cast<std::size_t>(c)];
      try {
        std::size_t used = 0;
        x[static_cast<std::size_t>(c)] = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        fail(lineno, "feature '" + s + "' is not a number");
      }
    }
    std::vector<std::int8_t> y(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) {
      const std::string& s = row[static_cast<std::size_t>(d + c)];
      int v = 0;
      if (s == "1" || s == "+1") v = 1;
      else if (s == "-1") v = -1, saw_minus = true;
      else if (s == "0") v = 0, saw_zero = true;
      else fail(lineno, "label '" + s + "' is not in {-1, 1} or {0, 1}");
      y[static_cast<std::size_t>(c)] = static_cast<std::int8_t>(v);
    }
    if (saw_zero && saw_minus) fail(lineno, "labels mix the {0, 1} and {-1, 1} encodings");
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }
  if (xs.empty()) fail(lineno, "no data rows");

  MultiLabelDataset data;
  data.X.resize(static_cast<Eigen::Index>(xs.size()), d);
  data.Y.resize(static_cast<Eigen::Index>(xs.size()), m);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (int c = 0; c < d; ++c) data.X(static_cast<Eigen::Index>(i), c) = xs[i][static_cast<std::size_t>(c)];
    for (int c = 0; c < m; ++c) {
      const std::int8_t v = ys[i][static_cast<std::size_t>(c)];
      data.Y(static_cast<Eigen::Index>(i), c) = v == 0 ? std::int8_t{-1} : v;
    }
  }
  return data;
}

inline MultiLabelDataset read_dataset_csv(const std::string& path, int label_columns = -1) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  return read_dataset_csv(in, path, label_columns);
}

inline void write_dataset_csv(std::ostream& out, const MultiLabelDataset& data) {
  for (int c = 0; c < data.d(); ++c) out << (c ? "," : "") << "x" << c + 1;
  for (int c = 0; c < data.m(); ++c) out << ",y" << c + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (int c = 0; c < data.d(); ++c) out << (c ? "," : "") << fmt(data.X(i, c));
    for (int c = 0; c < data.m(); ++c) out << ',' << static_cast<int>(data.Y(i, c));
    out << '\n';
  }
}

/// `# schema_version=1`, then one `# key=value` line per entry.
inline void write_preamble(std::ostream& out, const std::vector<std::string>& meta) {
  out << "# schema_version=" << csv_schema_version << '\n';
  for (const auto& line : meta) out << "# " << line << '\n';
}

/// Columns: estimator,m,trial,excluded,separable,degenerate,failed,n_eff,iterations,u_1..u_d.
inline void write_trials_csv(std::ostream& out, const std::vector<TrialSummary>& summaries, int m, int d) {
  out << "estimator,m,trial,excluded,separable,degenerate,failed,n_eff,iterations";
  for (int k = 0; k < d; ++k) out << ",u_" << k + 1;
  out << '\n';
  for (const auto& s : summaries) {
    for (const auto& r : s.trials) {
      out << to_string(s.kind) << ',' << m << ',' << r.trial << ',' << r.excluded() << ',' << r.separable << ','
          << r.degenerate << ',' << r.failed << ',' << r.n_eff << ',' << r.iterations;
      for (int k = 0; k < d; ++k) out << ',' << (r.u_hat.size() == d ? fmt(r.u_hat(k)) : std::string("nan"));
      out << '\n';
    }
  }
}

/// Columns: estimator,m,n_eff,trials,excluded,t_m,theory_multiplier,empirical_multiplier,relative_error.
inline void write_summary_header(std::ostream& out) {
  out << "estimator,m,n_eff,trials,excluded,t_m,theory_multiplier,empirical_multiplier,relative_error\n";
}

inline void write_summary_rows(std::ostream& out, const std::vector<TrialSummary>& summaries, int m) {
  for (const auto& s : summaries)
    out << to_string(s.kind) << ',' << m << ',' << s.n_eff << ',' << s.trials.size() << ',' << s.excluded_count
        << ',' << fmt(s.theory.t_m) << ',' << fmt(s.theory.variance_multiplier) << ','
        << fmt(s.empirical_multiplier) << ',' << fmt(s.relative_error) << '\n';
}

/// Columns: estimator,empirical_slope,theory_slope.
inline void write_slopes_csv(std::ostream& out, const std::vector<ScalingTable>& tables) {
  out << "estimator,empirical_slope,theory_slope\n";
  for (const auto& t : tables)
    out << to_string(t.kind) << ',' << fmt(t.empirical_slope) << ',' << fmt(t.theory_slope) << '\n';
}

}  // namespace mlabel
