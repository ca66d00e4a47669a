#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "elw/elw.hpp"

#ifndef ELW_DATA_DIR
#define ELW_DATA_DIR "data"
#endif

namespace elw::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2 };

struct EstimateRequest {
  std::string input;
  Regime regime = Regime::kMissing;
  io::SampleBindings bindings;
  std::vector<std::string> estimators{"elw"};
  std::string interval = "none";
  double level = 0.95;
  std::uint64_t seed = 1;
  std::size_t B = 1000;
  std::size_t M = 0;
  unsigned threads = 1;
  std::string out;
  bool fit_score = false;
  std::vector<std::string> covariates;
};

namespace detail {

inline std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

inline bool has_variance(const std::string& tag) { return tag == "IPW" || tag == "SIPW" || tag == "ELW"; }

inline void print_vector(std::ostream& os, const Eigen::VectorXd& v) {
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
}

}  // namespace detail

/// Runs the requested estimators on a CSV sample and prints a report.
inline int cmd_estimate(const EstimateRequest& req, std::ostream& out) {
  io::CsvTable table = io::read_csv_file(req.input);
  io::SampleBindings b = req.bindings;
  b.regime = req.regime;

  std::optional<LogisticModel> model;
  Eigen::MatrixXd X;
  if (req.fit_score) {
    if (req.regime != Regime::kMissing) throw DomainError("--fit-score applies to the missing regime only");
    if (req.covariates.empty()) throw DomainError("--fit-score needs --covariates");
    if (req.interval == "re") throw DomainError("resampling intervals are not available with --fit-score");
    const std::size_t dcol = table.column(b.indicator);
    X = io::load_matrix(table, req.covariates, true);
    std::vector<std::uint8_t> d(table.rows.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = io::require_number(table.rows[i][dcol], "indicator") == 1.0;
    model = fit_logistic(X, d);
    const Eigen::VectorXd fitted = model->predict_all(X);
    auto pcol = table.find(b.probability);
    if (!pcol) {
      table.header.push_back(b.probability);
      for (auto& row : table.rows) row.emplace_back();
      pcol = table.header.size() - 1;
    }
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      table.rows[i][*pcol] = io::format_number(fitted[static_cast<Eigen::Index>(i)]);
  }
  const Sample s = io::load_sample(table, b);

  out << std::setprecision(10);
  out << "regime: " << io::regime_tag(s.regime) << "  n = " << s.observed_count() << "  N = " << s.n_total
      << "  dim = " << s.dim() << '\n';
  if (model) {
    out << "fitted logistic score, beta = ";
    detail::print_vector(out, model->beta);
    out << '\n';
  }

  std::vector<io::EstimateRecord> records;
  for (const auto& raw : req.estimators) {
    const std::string tag = detail::upper(raw);
    io::EstimateRecord rec;
    rec.estimator = tag;
    rec.regime = io::regime_tag(s.regime);
    rec.n = s.observed_count();
    rec.n_total = s.n_total;

    EstimatorReport report;
    if (tag == "IPW") report = ipw_mean(s);
    else if (tag == "SIPW") report = sipw_mean(s);
    else if (tag == "ELW") report = elw_mean(s);
    else if (tag == "ZZZ") report = zzz_mean(s);
    else if (tag == "CHIM") report = chim_mean(s);
    else if (tag == "MW1") report = mw_trim_mean(s, 1);
    else if (tag == "MW2") report = mw_trim_mean(s, 2);
    else throw DomainError("unknown estimator '" + raw + "'");
    rec.theta = report.theta_hat;
    rec.threshold = report.threshold;

    out << tag << ": theta_hat = ";
    detail::print_vector(out, rec.theta);
    if (!std::isnan(rec.threshold)) out << "  threshold = " << rec.threshold;
    if (report.trimmed_everything) out << "  (warning: every observed unit was trimmed)";
    out << '\n';

    if (detail::has_variance(tag)) {
      sim::detail::ReplicateData rd;
      rd.score_model = model;
      rd.covariates = X;
      const PointAndVariance pv = sim::detail::point_and_variance(tag, s, model ? &rd : nullptr);
      rec.sigma = pv.sigma;
      out << "  Sigma_hat (scale " << variance_scale(s) << ") =\n" << pv.sigma << '\n';
      if (req.interval == "an" || req.interval == "re") {
        ConfidenceRegion region;
        if (req.interval == "an") {
          region = wald_interval(pv.theta, pv.sigma, variance_scale(s), req.level);
        } else {
          if (s.regime != Regime::kMissing) throw DomainError("resampling intervals need the missing regime");
          ResampleOptions opt;
          opt.replicates = req.B;
          opt.subsample = req.M;
          opt.level = req.level;
          opt.seed = req.seed;
          opt.threads = req.threads;
          auto proc = [&tag](const Sample& sub) { return sim::detail::point_and_variance(tag, sub); };
          region = resample_interval(s, proc, opt);
        }
        rec.interval = req.interval;
        rec.level = req.level;
        rec.lower = region.lower;
        rec.upper = region.upper;
        out << "  " << req.level * 100 << "% " << req.interval << " interval: lower = ";
        detail::print_vector(out, region.lower);
        out << ", upper = ";
        detail::print_vector(out, region.upper);
        out << '\n';
      }
    }
    records.push_back(std::move(rec));
  }

  if (!req.out.empty()) {
    std::ofstream f(req.out);
    if (!f) throw DomainError("cannot write '" + req.out + "'");
    io::write_estimates(f, records);
  }
  return kOk;
}

/// One simulation cell; metrics CSV on `out` (or --out), optional raw export.
inline int cmd_simulate(const sim::SimulationConfig& config, const std::string& out_path,
                        const std::string& raw_path, std::ostream& out) {
  const sim::MetricsTable t = sim::run_replications(config);
  if (out_path.empty()) {
    io::write_metrics(out, {t});
  } else {
    std::ofstream f(out_path);
    if (!f) throw DomainError("cannot write '" + out_path + "'");
    io::write_metrics(f, {t});
  }
  if (!raw_path.empty()) {
    std::ofstream f(raw_path);
    if (!f) throw DomainError("cannot write '" + raw_path + "'");
    io::write_replicates(f, t);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Table reproduction

struct ReferenceKey {
  int table = 0;
  std::string gamma, c, rho, design, model, column, metric;
  auto operator<=>(const ReferenceKey&) const = default;
};

inline std::map<ReferenceKey, double> load_reference(const std::string& path) {
  const io::CsvTable t = io::read_csv_file(path);
  std::map<ReferenceKey, double> out;
  for (const auto& r : t.rows) {
    ReferenceKey k;
    k.table = std::stoi(r[t.column("table")]);
    k.gamma = r[t.column("gamma")];
    k.c = r[t.column("c")];
    k.rho = r[t.column("rho")];
    k.design = r[t.column("design")];
    k.model = r[t.column("model")];
    k.column = r[t.column("column")];
    k.metric = r[t.column("metric")];
    out[k] = io::require_number(r[t.column("value")], "value");
  }
  return out;
}

struct ReproduceOptions {
  int table = 1;
  std::size_t reps = 5000;
  std::uint64_t seed = 42;
  unsigned threads = 0;
  std::size_t B = 1000;
  std::string reference = std::string(ELW_DATA_DIR) + "/reference_values.csv";
};

/// Runs every cell of a published table and writes a long CSV with the
/// simulated value next to the published one.
inline int cmd_reproduce(const ReproduceOptions& opt, std::ostream& out) {
  if (opt.table < 1 || opt.table > 4) throw DomainError("unknown table id " + std::to_string(opt.table));
  const auto ref = load_reference(opt.reference);

  std::vector<std::string> columns;
  std::vector<std::string> run;  // columns the harness computes
  if (opt.table == 1) {
    columns = {"IPW", "SIPW", "ZZZ", "CHIM", "MW1", "MW2", "ELW"};
    run = columns;
  } else if (opt.table == 2) {
    columns = {"IPW-an", "IPW-re", "SIPW-an", "SIPW-re", "MW1-re", "MW2-re", "ELW-an", "ELW-re"};
    run = {"IPW-an", "IPW-re", "SIPW-an", "SIPW-re", "ELW-an", "ELW-re"};
  } else if (opt.table == 3) {
    columns = {"IPW-an", "SIPW-an", "ELW-an"};
    run = columns;
  } else {
    columns = {"IPW", "SIPW", "ZZZ", "ELW"};
    run = columns;
  }

  struct Cell {
    sim::SimulationConfig config;
    std::string gamma, c, rho, design;
  };
  std::vector<Cell> cells;
  if (opt.table <= 2) {
    for (const char* g : {"1.5", "2.5"})
      for (const char* c : {"1.0", "0.1"})
        for (int m = 1; m <= 4; ++m) {
          Cell cell;
          cell.config.example = 1;
          cell.config.gamma = std::stod(g);
          cell.config.c = std::stod(c);
          cell.config.model = m;
          cell.config.N = 2000;
          cell.gamma = g;
          cell.c = c;
          cells.push_back(cell);
        }
  } else {
    for (const char* d : {"poisson", "pivotal", "pps"})
      for (const char* rho : {"0.2", "0.8"})
        for (int m = 1; m <= 4; ++m) {
          Cell cell;
          cell.config.example = 2;
          cell.config.rho = std::stod(rho);
          cell.config.design = parse_design(d);
          cell.config.model = m;
          cell.config.N = 3000;
          cell.config.n = 500;
          cell.rho = rho;
          cell.design = d;
          cells.push_back(cell);
        }
  }

  out << "table,gamma,c,rho,design,model,column,metric,value,reference,reps_used\n";
  for (auto& cell : cells) {
    cell.config.reps = opt.reps;
    cell.config.seed = opt.seed;
    cell.config.threads = opt.threads;
    cell.config.B = opt.B;
    cell.config.estimators = run;
    const sim::MetricsTable t = sim::run_replications(cell.config);
    const std::string model = std::to_string(cell.config.model);
    auto emit = [&](const std::string& col, const std::string& metric, double value, std::size_t used) {
      ReferenceKey k{opt.table, cell.gamma, cell.c, cell.rho, cell.design, model, col, metric};
      const auto it = ref.find(k);
      out << opt.table << ',' << cell.gamma << ',' << cell.c << ',' << cell.rho << ',' << cell.design << ','
          << model << ',' << col << ',' << metric << ',' << io::format_number(value) << ','
          << (it == ref.end() ? std::string{} : io::format_number(it->second)) << ',' << used << '\n';
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& col : columns) {
      const bool computed = std::find(run.begin(), run.end(), col) != run.end();
      if (opt.table == 1 || opt.table == 4) {
        emit(col, "rmse", computed ? t.row(col).rmse : nan, computed ? t.row(col).reps_used : 0);
      } else {
        const double cov = computed ? 100.0 * t.row(col).coverage : nan;
        const double len = computed ? t.row(col).avg_length : nan;
        const std::size_t used = computed ? t.row(col).reps_used : 0;
        emit(col, "coverage", cov, used);
        emit(col, "length", len, used);
      }
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

/// Parses argv and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empirical likelihood weighting for biased samples"};
  app.require_subcommand(1);

  EstimateRequest req;
  std::string regime = "missing";
  std::optional<std::size_t> n_total;
  std::vector<std::string> responses;
  auto* est = app.add_subcommand("estimate", "Estimate a mean from a CSV sample");
  est->add_option("--input", req.input, "CSV file")->required();
  est->add_option("--regime", regime, "missing, wor or wr")->check(CLI::IsMember({"missing", "wor", "wr"}));
  est->add_option("--estimator", req.estimators, "ipw, sipw, elw, zzz, chim, mw1, mw2 (repeatable)");
  est->add_option("--interval", req.interval, "none, an or re")->check(CLI::IsMember({"none", "an", "re"}));
  est->add_option("--level", req.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
  est->add_option("--B", req.B, "Resampling replicates");
  est->add_option("--M", req.M, "Subsample size (default floor(sqrt(N)))");
  est->add_option("--n-total", n_total, "Population or full-data size N");
  est->add_option("--seed", req.seed, "Random seed");
  est->add_option("--out", req.out, "Write estimates as CSV");
  est->add_option("--threads", req.threads, "Worker threads for resampling (0 = all)");
  est->add_option("--indicator", req.bindings.indicator, "Indicator column (default d)");
  est->add_option("--response", responses, "Response column(s) (default y)");
  est->add_option("--probability", req.bindings.probability, "Probability column (default pi; q for wr)");
  est->add_flag("--fit-score", req.fit_score, "Fit a logistic score on --covariates");
  est->add_option("--covariates", req.covariates, "Covariate columns for --fit-score");

  sim::SimulationConfig cfg;
  std::string design = "poisson";
  std::string out_path, raw_path;
  std::vector<std::string> sim_estimators;
  std::optional<double> noise_sd;
  auto* simc = app.add_subcommand("simulate", "Run one simulation cell");
  simc->add_option("--example", cfg.example, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  simc->add_option("--model", cfg.model, "1..4")->check(CLI::Range(1, 4));
  simc->add_option("--gamma", cfg.gamma, "Example 1 tail parameter");
  simc->add_option("--c", cfg.c, "Example 1 noise scale");
  simc->add_option("--rho", cfg.rho, "Example 2 correlation parameter");
  simc->add_option("--noise-sd", noise_sd, "Example 2 noise sd override");
  simc->add_option("--design", design, "poisson, pivotal, pps or srswor");
  simc->add_option("--N", cfg.N, "Population size");
  simc->add_option("--n", cfg.n, "Example 2 sample size");
  simc->add_option("--reps", cfg.reps, "Replicates");
  simc->add_option("--seed", cfg.seed, "Master seed");
  simc->add_option("--estimator", sim_estimators, "Estimator or interval tags (repeatable)");
  simc->add_option("--level", cfg.level, "Confidence level");
  simc->add_option("--B", cfg.B, "Resampling replicates");
  simc->add_option("--M", cfg.M, "Subsample size");
  simc->add_option("--threads", cfg.threads, "Worker threads (0 = all)");
  simc->add_flag("--estimated-score", cfg.estimated_score, "Example 1: fit a logistic score");
  simc->add_option("--out", out_path, "Metrics CSV path (default stdout)");
  simc->add_option("--raw", raw_path, "Per-replicate CSV path");

  ReproduceOptions rep;
  std::string rep_out;
  auto* repc = app.add_subcommand("reproduce", "Reproduce a published simulation table");
  repc->add_option("--table", rep.table, "1, 2, 3 or 4")->required();
  repc->add_option("--reps", rep.reps, "Replicates per cell");
  repc->add_option("--seed", rep.seed, "Master seed");
  repc->add_option("--threads", rep.threads, "Worker threads (0 = all)");
  repc->add_option("--B", rep.B, "Resampling replicates");
  repc->add_option("--reference", rep.reference, "Published values CSV");
  repc->add_option("--out", rep_out, "Output CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*est) {
      req.regime = io::parse_regime(regime);
      req.bindings.n_total = n_total;
      if (!responses.empty()) req.bindings.responses = responses;
      return cmd_estimate(req, out);
    }
    if (*simc) {
      cfg.design = parse_design(design);
      cfg.noise_sd = noise_sd;
      if (!sim_estimators.empty()) cfg.estimators = sim_estimators;
      return cmd_simulate(cfg, out_path, raw_path, out);
    }
    if (rep_out.empty()) return cmd_reproduce(rep, out);
    std::ofstream f(rep_out);
    if (!f) throw DomainError("cannot write '" + rep_out + "'");
    return cmd_reproduce(rep, f);
  } catch (const InvalidSample& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const io::CsvError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace elw::cli
