#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elw/errors.hpp"
#include "elw/estimators.hpp"
#include "elw/inference.hpp"
#include "elw/sample.hpp"
#include "elw/simulation.hpp"

namespace elw::io {

class CsvError : public Error {
 public:
  using Error::Error;
};

/// Comma-separated table with a mandatory header row. Fields may be quoted
/// with double quotes ("" escapes a quote). Empty fields are kept as "".
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }
  std::size_t column(std::string_view name) const {
    if (auto j = find(name)) return *j;
    throw CsvError("missing column '" + std::string(name) + "'");
  }
};

namespace detail {

inline std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  if (quoted) throw CsvError("unterminated quote on line " + std::to_string(line_no));
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = detail::split_record(line, line_no);
    for (auto& f : fields) f = detail::trim(std::move(f));
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size())
      throw CsvError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                     " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw CsvError("empty CSV: a header row is required");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  return read_csv(in);
}

/// Strict decimal parse; empty field gives nullopt. "nan" and "inf" are accepted.
inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw CsvError("not a number: '" + std::string(s) + "'");
  return v;
}

inline double require_number(std::string_view s, std::string_view what) {
  auto v = parse_number(s);
  if (!v) throw CsvError("empty " + std::string(what) + " field");
  return *v;
}

/// Shortest text that parses back to the same double; NaN becomes an empty field.
inline std::string format_number(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

// ---------------------------------------------------------------------------
// Samples from CSV

inline Regime parse_regime(const std::string& s) {
  if (s == "missing") return Regime::kMissing;
  if (s == "wor") return Regime::kWithoutReplacement;
  if (s == "wr") return Regime::kWithReplacement;
  throw DomainError("unknown regime '" + s + "' (expected missing, wor or wr)");
}

inline const char* regime_tag(Regime r) {
  switch (r) {
    case Regime::kMissing: return "missing";
    case Regime::kWithoutReplacement: return "wor";
    case Regime::kWithReplacement: return "wr";
  }
  return "?";
}

struct SampleBindings {
  std::string indicator = "d";  ///< ignored for wr; optional otherwise
  std::vector<std::string> responses{"y"};
  std::string probability = "pi";  ///< pi for missing/wor, per-draw q for wr
  std::optional<std::size_t> n_total;
  Regime regime = Regime::kMissing;
};

/// Builds a sample from a table. Without an indicator column every row is
/// observed and n_total is required; with one, d = 0 rows may leave the
/// responses empty. For wr every row is one draw with probability q.
inline Sample load_sample(const CsvTable& t, const SampleBindings& b) {
  if (b.responses.empty()) throw CsvError("no response columns bound");
  std::vector<std::size_t> ycol;
  for (const auto& name : b.responses) ycol.push_back(t.column(name));
  const std::size_t pcol = t.column(b.probability);
  const auto rows = t.rows.size();
  if (rows == 0) throw CsvError("CSV has no data rows");
  const auto q = static_cast<Eigen::Index>(ycol.size());

  if (b.regime == Regime::kWithReplacement) {
    if (!b.n_total) throw CsvError("--n-total is required for the wr regime");
    Eigen::MatrixXd g(static_cast<Eigen::Index>(rows), q);
    std::vector<double> qs(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (Eigen::Index k = 0; k < q; ++k)
        g(static_cast<Eigen::Index>(i), k) = require_number(t.rows[i][ycol[static_cast<std::size_t>(k)]], "response");
      qs[i] = require_number(t.rows[i][pcol], "probability");
    }
    return make_wr_sample(std::move(g), qs, *b.n_total);
  }

  const auto dcol = t.find(b.indicator);
  std::vector<std::uint8_t> d(rows, 1);
  std::vector<double> pi(rows);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(rows), q);
  for (std::size_t i = 0; i < rows; ++i) {
    if (dcol) {
      const double dv = require_number(t.rows[i][*dcol], "indicator");
      if (dv != 0.0 && dv != 1.0) throw CsvError("indicator must be 0 or 1 on row " + std::to_string(i + 1));
      d[i] = dv == 1.0 ? 1 : 0;
    }
    pi[i] = require_number(t.rows[i][pcol], "probability");
    for (Eigen::Index k = 0; k < q; ++k) {
      const auto v = parse_number(t.rows[i][ycol[static_cast<std::size_t>(k)]]);
      if (!v && d[i]) throw CsvError("observed row " + std::to_string(i + 1) + " has an empty response");
      g(static_cast<Eigen::Index>(i), k) = v.value_or(std::numeric_limits<double>::quiet_NaN());
    }
  }
  if (!dcol && !b.n_total) throw CsvError("without an indicator column, --n-total is required");
  return make_sample(std::move(d), std::move(g), std::move(pi), b.n_total, b.regime);
}

/// Numeric columns as an N x p matrix (for covariates of a fitted score).
inline Eigen::MatrixXd load_matrix(const CsvTable& t, const std::vector<std::string>& columns, bool intercept) {
  const auto p = static_cast<Eigen::Index>(columns.size() + (intercept ? 1 : 0));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(t.rows.size()), p);
  std::vector<std::size_t> cols;
  for (const auto& c : columns) cols.push_back(t.column(c));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    Eigen::Index k = 0;
    if (intercept) X(static_cast<Eigen::Index>(i), k++) = 1.0;
    for (auto c : cols) X(static_cast<Eigen::Index>(i), k++) = require_number(t.rows[i][c], "covariate");
  }
  return X;
}

// ---------------------------------------------------------------------------
// Estimate reports: one row per (estimator, component); sigma_j columns hold
// the row of the covariance matrix for that component.

struct EstimateRecord {
  std::string estimator;
  std::string regime;
  std::size_t n = 0;
  std::size_t n_total = 0;
  Eigen::VectorXd theta;
  std::optional<Eigen::MatrixXd> sigma;
  std::string interval;  ///< "", "an" or "re"
  double level = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double threshold = std::numeric_limits<double>::quiet_NaN();
};

inline void write_estimates(std::ostream& os, const std::vector<EstimateRecord>& recs) {
  Eigen::Index q = 0;
  for (const auto& r : recs) q = std::max(q, r.theta.size());
  os << "estimator,regime,n,n_total,component,theta_hat,interval,level,lower,upper,threshold";
  for (Eigen::Index j = 0; j < q; ++j) os << ",sigma_" << j;
  os << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& r : recs) {
    for (Eigen::Index k = 0; k < r.theta.size(); ++k) {
      os << quote(r.estimator) << ',' << r.regime << ',' << r.n << ',' << r.n_total << ',' << k << ','
         << format_number(r.theta[k]) << ',' << r.interval << ',' << format_number(r.level) << ','
         << format_number(r.lower.size() ? r.lower[k] : nan) << ','
         << format_number(r.upper.size() ? r.upper[k] : nan) << ',' << format_number(r.threshold);
      for (Eigen::Index j = 0; j < q; ++j)
        os << ',' << format_number(r.sigma && j < r.sigma->cols() ? (*r.sigma)(k, j) : nan);
      os << '\n';
    }
  }
}

inline std::vector<EstimateRecord> read_estimates(const CsvTable& t) {
  const auto ce = t.column("estimator"), cr = t.column("regime"), cn = t.column("n"), cN = t.column("n_total"),
             ck = t.column("component"), ct = t.column("theta_hat"), ci = t.column("interval"),
             cl = t.column("level"), clo = t.column("lower"), cup = t.column("upper"), cth = t.column("threshold");
  std::vector<std::size_t> cs;
  for (std::size_t j = 0;; ++j) {
    auto c = t.find("sigma_" + std::to_string(j));
    if (!c) break;
    cs.push_back(*c);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<EstimateRecord> out;
  std::size_t i = 0;
  while (i < t.rows.size()) {
    std::size_t j = i;
    while (j < t.rows.size() && t.rows[j][ce] == t.rows[i][ce] && require_number(t.rows[j][ck], "component") == j - i)
      ++j;
    const auto q = static_cast<Eigen::Index>(j - i);
    EstimateRecord r;
    r.estimator = t.rows[i][ce];
    r.regime = t.rows[i][cr];
    r.n = static_cast<std::size_t>(require_number(t.rows[i][cn], "n"));
    r.n_total = static_cast<std::size_t>(require_number(t.rows[i][cN], "n_total"));
    r.interval = t.rows[i][ci];
    r.level = parse_number(t.rows[i][cl]).value_or(nan);
    r.threshold = parse_number(t.rows[i][cth]).value_or(nan);
    r.theta.resize(q);
    if (!r.interval.empty()) {
      r.lower.resize(q);
      r.upper.resize(q);
    }
    Eigen::MatrixXd sigma(q, q);
    bool has_sigma = static_cast<Eigen::Index>(cs.size()) >= q;
    for (Eigen::Index k = 0; k < q; ++k) {
      const auto& row = t.rows[i + static_cast<std::size_t>(k)];
      r.theta[k] = require_number(row[ct], "theta_hat");
      if (!r.interval.empty()) {
        r.lower[k] = require_number(row[clo], "lower");
        r.upper[k] = require_number(row[cup], "upper");
      }
      for (Eigen::Index m = 0; m < q && has_sigma; ++m) {
        auto v = parse_number(row[cs[static_cast<std::size_t>(m)]]);
        if (!v) has_sigma = false;
        else sigma(k, m) = *v;
      }
    }
    if (has_sigma) r.sigma = sigma;
    out.push_back(std::move(r));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation metrics

inline void write_metrics(std::ostream& os, const std::vector<sim::MetricsTable>& tables, bool header = true) {
  if (header)
    os << "example,model,gamma,c,rho,design,N,n,reps,seed,estimator,rmse,bias,coverage,avg_length,reps_used\n";
  for (const auto& t : tables) {
    const auto& c = t.config;
    const bool ex1 = c.example == 1;
    for (const auto& r : t.rows) {
      os << c.example << ',' << c.model << ',' << (ex1 ? format_number(c.gamma) : "") << ','
         << (ex1 ? format_number(c.c) : "") << ',' << (ex1 ? "" : format_number(c.rho)) << ','
         << (ex1 ? "" : to_string(c.design)) << ',' << c.N << ',' << (ex1 ? "" : std::to_string(c.n)) << ','
         << c.reps << ',' << c.seed << ',' << r.estimator << ',' << format_number(r.rmse) << ','
         << format_number(r.bias) << ',' << format_number(r.coverage) << ',' << format_number(r.avg_length)
         << ',' << r.reps_used << '\n';
    }
  }
}

struct MetricsRecord {
  int example = 0;
  int model = 0;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double c = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
  std::string design;
  std::size_t N = 0;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  sim::MetricsRow row;
};

inline std::vector<MetricsRecord> read_metrics(const CsvTable& t) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<MetricsRecord> out;
  for (const auto& f : t.rows) {
    auto num = [&](const char* col) { return parse_number(f[t.column(col)]).value_or(nan); };
    MetricsRecord m;
    m.example = static_cast<int>(num("example"));
    m.model = static_cast<int>(num("model"));
    m.gamma = num("gamma");
    m.c = num("c");
    m.rho = num("rho");
    m.design = f[t.column("design")];
    m.N = static_cast<std::size_t>(num("N"));
    const double n = num("n");
    m.n = std::isnan(n) ? 0 : static_cast<std::size_t>(n);
    m.reps = static_cast<std::size_t>(num("reps"));
    m.seed = std::stoull(f[t.column("seed")]);
    m.row.estimator = f[t.column("estimator")];
    m.row.rmse = num("rmse");
    m.row.bias = num("bias");
    m.row.coverage = num("coverage");
    m.row.avg_length = num("avg_length");
    m.row.reps_used = static_cast<std::size_t>(num("reps_used"));
    out.push_back(std::move(m));
  }
  return out;
}

/// Long-format per-replicate export for external plotting.
inline void write_replicates(std::ostream& os, const sim::MetricsTable& t) {
  os << "rep,theta,estimator,estimate,lower,upper,error\n";
  for (std::size_t r = 0; r < t.replicates.size(); ++r) {
    const auto& rec = t.replicates[r];
    for (std::size_t j = 0; j < t.config.estimators.size(); ++j)
      os << r << ',' << format_number(rec.theta) << ',' << t.config.estimators[j] << ','
         << format_number(rec.estimate[j]) << ',' << format_number(rec.lower[j]) << ','
         << format_number(rec.upper[j]) << ',' << quote(rec.error[j]) << '\n';
  }
}

}  // namespace elw::io
