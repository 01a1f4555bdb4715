#pragma once

// Command-line front end: fit, tune, simulate, predict.
//
// Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure.
// Every report embeds a manifest with the settings needed to rerun it;
// wall-clock timings live under a separate "timings" key.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sprobit/cavi.hpp"
#include "sprobit/errors.hpp"
#include "sprobit/evaluation.hpp"
#include "sprobit/gibbs.hpp"
#include "sprobit/io.hpp"
#include "sprobit/model_core.hpp"
#include "sprobit/parallel.hpp"

namespace sprobit::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char *kToolName = "sprobit";
inline constexpr const char *kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kNumericalError = 4 };

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Option blocks

struct DataOptions {
  std::string path;
  std::string response;
  bool standardize = false;
  bool intercept = false;
};

struct FitOptions {
  DataOptions data;
  std::string method = "vb";
  std::optional<double> rho;
  double nu0sq = 25.0;
  std::uint64_t seed = 1;
  double tol = 1e-6;
  int max_iter = 500;
  long iters = 11000;
  long burnin = 1000;
  long thin = 1;
  int chains = 1;
  int folds = 5;
  std::string rho_grid = "0.05:0.5:0.05";
  std::string out;
  int threads = 1;
};

struct TuneOptions {
  DataOptions data;
  int folds = 5;
  std::string rho_grid = "0.05:0.5:0.05";
  double nu0sq = 25.0;
  std::uint64_t seed = 1;
  double tol = 1e-6;
  int max_iter = 500;
  std::string out;
  int threads = 1;
};

struct SimulateOptions {
  std::string scenario = "s1";
  std::optional<long> n;
  std::optional<long> p;
  std::optional<int> replicates;
  double active_fraction = 0.02;
  long test_size = 500;
  std::string methods = "vb,gibbs";
  std::uint64_t seed = 1;
  long iters = 11000;
  long burnin = 1000;
  int folds = 5;
  std::string rho_grid = "0.05:0.5:0.05";
  double nu0sq = 25.0;
  double tol = 1e-6;
  int max_iter = 500;
  std::string out;
  int threads = 1;
};

struct PredictOptions {
  std::string model;
  std::string data;
  std::string out;
};

// ---------------------------------------------------------------------------
// Helpers

/// "a:b:s" (inclusive, values rounded to 12 decimals) or "v1,v2,...".
inline std::vector<double> parse_rho_grid(const std::string &spec) {
  std::vector<double> grid;
  auto num = [&](const std::string &s) {
    const auto v = io::parse_double(s);
    if (!v)
      throw UsageError("invalid rho grid entry '" + s + "'");
    return *v;
  };
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':'))
      parts.push_back(item);
    if (parts.size() != 3)
      throw UsageError("rho grid range must be start:stop:step");
    const double a = num(parts[0]), b = num(parts[1]), s = num(parts[2]);
    if (!(s > 0.0) || b < a)
      throw UsageError("rho grid range needs step > 0 and stop >= start");
    const auto count = static_cast<long>(std::floor((b - a) / s + 1e-9)) + 1;
    for (long k = 0; k < count; ++k)
      grid.push_back(std::round((a + static_cast<double>(k) * s) * 1e12) / 1e12);
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ','))
      grid.push_back(num(item));
  }
  if (grid.empty())
    throw UsageError("empty rho grid");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0 && grid[k] < 1.0))
      throw UsageError("rho grid values must lie in (0, 1)");
    if (k > 0 && !(grid[k] > grid[k - 1]))
      throw UsageError("rho grid must be strictly ascending");
  }
  return grid;
}

struct PreparedData {
  Dataset data;
  std::optional<io::Standardization> standardization;
  std::size_t raw_feature_count = 0;
};

inline PreparedData prepare_data(const DataOptions &opts) {
  PreparedData out;
  const io::CsvTable table = io::read_csv(opts.path);
  out.data = io::dataset_from_table(table, opts.response);
  out.raw_feature_count = static_cast<std::size_t>(out.data.p());
  if (opts.standardize) {
    out.standardization = io::Standardization::fit(out.data.X);
    out.standardization->apply(out.data.X);
  }
  if (opts.intercept)
    io::append_intercept(out.data.X, out.data.feature_names);
  validate_dataset(out.data);
  return out;
}

inline json data_manifest(const DataOptions &opts, const PreparedData &prep) {
  json m;
  m["data"] = opts.path;
  m["response"] = opts.response;
  m["standardize"] = opts.standardize;
  m["intercept"] = opts.intercept;
  m["raw_feature_count"] = prep.raw_feature_count;
  if (prep.standardization) {
    m["standardization"] = {{"means", prep.standardization->means}, {"sds", prep.standardization->sds}};
  } else {
    m["standardization"] = nullptr;
  }
  return m;
}

inline json base_manifest(const std::string &command) {
  json m;
  m["command"] = command;
  m["tool"] = kToolName;
  m["tool_version"] = kToolVersion;
  return m;
}

inline void write_json(const fs::path &path, const json &j) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline fs::path prepare_out_dir(const std::string &out) {
  if (out.empty())
    throw UsageError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void warn_zero_columns(const Dataset &data, const GramCache &gram) {
  for (Index j : gram.zero_columns)
    std::cerr << "warning: column '" << feature_name(data, j)
              << "' is identically zero; its inclusion probability stays at rho\n";
}

inline CaviConfig cavi_config(double tol, int max_iter) {
  CaviConfig c;
  c.tol_elbo = tol;
  c.tol_param = tol;
  c.max_iter = max_iter;
  return c;
}

template <typename Fn>
auto as_usage(Fn &&fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::domain_error &e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
}

inline void write_draws_csv(const fs::path &path, const GibbsDraws &draws) {
  io::CsvWriter w(path);
  const Index p = draws.beta.cols();
  for (Index j = 0; j < p; ++j)
    w.field("gamma_" + std::to_string(j + 1));
  for (Index j = 0; j < p; ++j)
    w.field("beta_" + std::to_string(j + 1));
  w.end_row();
  for (Index t = 0; t < draws.beta.rows(); ++t) {
    for (Index j = 0; j < p; ++j)
      w.field(static_cast<int>(draws.gamma(t, j)));
    for (Index j = 0; j < p; ++j)
      w.field(draws.beta(t, j));
    w.end_row();
  }
}

inline GibbsDraws read_draws_csv(const fs::path &path) {
  const io::CsvTable t = io::read_csv(path);
  if (t.header.empty() || t.header.size() % 2 != 0)
    throw ValidationError("'" + path.string() + "' is not a draws file");
  const auto p = static_cast<Index>(t.header.size() / 2);
  GibbsDraws d;
  d.gamma.resize(static_cast<Index>(t.rows.size()), p);
  d.beta.resize(static_cast<Index>(t.rows.size()), p);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (Index j = 0; j < p; ++j) {
      const auto g = io::parse_double(t.rows[r][static_cast<std::size_t>(j)]);
      const auto b = io::parse_double(t.rows[r][static_cast<std::size_t>(p + j)]);
      if (!g || !b || (*g != 0.0 && *g != 1.0))
        throw ValidationError("'" + path.string() + "' row " + std::to_string(r) + " is malformed", {r});
      d.gamma(static_cast<Index>(r), j) = static_cast<std::uint8_t>(*g);
      d.beta(static_cast<Index>(r), j) = *b;
    }
  d.draws_per_chain = static_cast<long>(t.rows.size());
  return d;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_fit(const FitOptions &o) {
  using clock = std::chrono::steady_clock;
  const auto t_total = clock::now();
  if (o.method != "vb" && o.method != "gibbs")
    throw UsageError("--method must be vb or gibbs");
  const CaviConfig cavi = as_usage([&] {
    const CaviConfig c = cavi_config(o.tol, o.max_iter);
    c.validate();
    return c;
  });
  std::vector<double> grid;
  if (!o.rho)
    grid = parse_rho_grid(o.rho_grid);
  GibbsConfig gcfg;
  gcfg.iterations = o.iters;
  gcfg.burn_in = o.burnin;
  gcfg.thin = o.thin;
  gcfg.chains = o.chains;
  gcfg.seed = o.seed;
  gcfg.threads = o.threads;
  if (o.method == "gibbs")
    as_usage([&] { gcfg.validate(); });
  const fs::path out = prepare_out_dir(o.out);

  const PreparedData prep = prepare_data(o.data);
  const Dataset &data = prep.data;
  const GramCache gram = validate_and_cache(data);
  warn_zero_columns(data, gram);

  json timings;
  Hyperparameters hyper;
  std::string source = "explicit";
  if (o.rho) {
    hyper = as_usage([&] { return Hyperparameters(derive_nu2(*o.rho, data.p(), o.nu0sq), *o.rho, o.nu0sq); });
  } else {
    CvConfig cv;
    cv.folds = o.folds;
    cv.rho_grid = grid;
    cv.nu0_2 = o.nu0sq;
    cv.seed = o.seed;
    cv.threads = o.threads;
    as_usage([&] { cv.validate(); });
    const auto t0 = clock::now();
    const CvResult res = tune_rho(data, cv, cavi);
    timings["tune_seconds"] = seconds_since(t0);
    hyper = Hyperparameters(res.nu2, res.rho, o.nu0sq);
    source = "tuned";
  }

  json report;
  report["schema_version"] = kSchemaVersion;
  report["method"] = o.method;
  report["features"] = data.feature_names;
  report["hyperparameters"] = {{"rho", hyper.rho}, {"nu2", hyper.nu2}, {"nu0sq", hyper.nu0_2}, {"source", source}};

  VectorXd pip, effect;
  const auto t_fit = clock::now();
  if (o.method == "vb") {
    const CaviResult res = fit(data, gram, hyper, cavi);
    timings["fit_seconds"] = seconds_since(t_fit);
    pip = res.state.w;
    effect = res.state.w.cwiseProduct(res.state.mu);

    io::CsvWriter trace(out / "elbo_trace.csv");
    trace.row("iteration", "elbo", "likelihood", "prior_beta", "prior_gamma", "entropy_beta", "entropy_z",
              "entropy_gamma");
    for (std::size_t t = 0; t < res.trace.values.size(); ++t) {
      const ElboTerms &e = res.trace.terms[t];
      trace.row(t + 1, res.trace.values[t], e.likelihood, e.prior_beta, e.prior_gamma, e.entropy_beta,
                e.entropy_z, e.entropy_gamma);
    }
    io::CsvWriter state(out / "vb_state.csv");
    state.row("feature", "w", "mu");
    for (Index j = 0; j < data.p(); ++j)
      state.row(feature_name(data, j), res.state.w(j), res.state.mu(j));

    report["converged"] = res.converged;
    report["iterations"] = res.state.iteration;
    report["final_elbo"] = res.trace.values.empty() ? 0.0 : res.trace.values.back();
    report["state_file"] = "vb_state.csv";
  } else {
    const GibbsDraws draws = run_chain(data, gram, hyper, gcfg);
    timings["fit_seconds"] = seconds_since(t_fit);
    const PosteriorSummary s = posterior_summaries(draws);
    pip = s.pip;
    effect = s.mean_effect;
    write_draws_csv(out / "draws.csv", draws);
    report["converged"] = true;
    report["iterations"] = gcfg.iterations;
    report["burn_in"] = gcfg.burn_in;
    report["thin"] = gcfg.thin;
    report["chains"] = gcfg.chains;
    report["stored_draws"] = draws.beta.rows();
    report["flip_counts"] = draws.flip_counts;
    report["state_file"] = "draws.csv";
  }

  io::CsvWriter pips(out / "pips.csv");
  pips.row("feature", "pip", "masked_coefficient");
  json selected = json::array();
  for (Index j = 0; j < data.p(); ++j) {
    pips.row(feature_name(data, j), pip(j), effect(j));
    if (pip(j) > 0.5)
      selected.push_back(feature_name(data, j));
  }
  report["threshold"] = 0.5;
  report["selected"] = selected;

  json manifest = base_manifest("fit");
  manifest["input"] = data_manifest(o.data, prep);
  manifest["seed"] = o.seed;
  manifest["settings"] = {{"method", o.method},     {"rho", o.rho ? json(*o.rho) : json(nullptr)},
                          {"nu0sq", o.nu0sq},       {"tol", o.tol},
                          {"max_iter", o.max_iter}, {"iters", o.iters},
                          {"burnin", o.burnin},     {"thin", o.thin},
                          {"chains", o.chains},     {"folds", o.folds},
                          {"rho_grid", o.rho_grid}};
  report["manifest"] = manifest;
  timings["total_seconds"] = seconds_since(t_total);
  report["timings"] = timings;
  write_json(out / "report.json", report);
  std::cout << "fit (" << o.method << "): " << selected.size() << " of " << data.p()
            << " features selected; wrote " << out.string() << '\n';
  return kOk;
}

inline int cmd_tune(const TuneOptions &o) {
  const auto t0 = std::chrono::steady_clock::now();
  const CaviConfig cavi = as_usage([&] {
    const CaviConfig c = cavi_config(o.tol, o.max_iter);
    c.validate();
    return c;
  });
  CvConfig cv;
  cv.folds = o.folds;
  cv.rho_grid = parse_rho_grid(o.rho_grid);
  cv.nu0_2 = o.nu0sq;
  cv.seed = o.seed;
  cv.threads = o.threads;
  as_usage([&] { cv.validate(); });
  const fs::path out = prepare_out_dir(o.out);

  const PreparedData prep = prepare_data(o.data);
  warn_zero_columns(prep.data, validate_and_cache(prep.data));
  const CvResult res = tune_rho(prep.data, cv, cavi);

  io::CsvWriter curve(out / "cv_curve.csv");
  curve.row("rho", "nu2", "dev_cv", "nonconverged_folds");
  io::CsvWriter per_fold(out / "fold_deviances.csv");
  per_fold.row("rho", "fold", "deviance");
  for (const CvPoint &pt : res.curve) {
    curve.row(pt.rho, pt.nu2, pt.dev_cv, pt.nonconverged_folds);
    for (std::size_t k = 0; k < pt.fold_deviance.size(); ++k)
      per_fold.row(pt.rho, k, pt.fold_deviance[k]);
  }
  io::CsvWriter folds(out / "folds.csv");
  folds.row("row", "fold");
  for (std::size_t i = 0; i < res.folds.fold_of.size(); ++i)
    folds.row(i, res.folds.fold_of[i]);

  json best;
  best["schema_version"] = kSchemaVersion;
  best["rho"] = res.rho;
  best["nu2"] = res.nu2;
  best["nu0sq"] = o.nu0sq;
  best["unstratified_folds"] = res.folds.unstratified;
  json manifest = base_manifest("tune");
  manifest["input"] = data_manifest(o.data, prep);
  manifest["seed"] = o.seed;
  manifest["settings"] = {{"folds", o.folds}, {"rho_grid", o.rho_grid}, {"nu0sq", o.nu0sq},
                          {"tol", o.tol},     {"max_iter", o.max_iter}};
  best["manifest"] = manifest;
  best["timings"] = {{"total_seconds", seconds_since(t0)}};
  write_json(out / "best.json", best);
  std::cout << "tune: rho* = " << io::format_double(res.rho) << ", nu2* = " << io::format_double(res.nu2)
            << "; wrote " << out.string() << '\n';
  return kOk;
}

inline std::vector<Method> parse_methods(const std::string &spec) {
  std::vector<Method> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "vb")
      out.push_back(Method::Vb);
    else if (item == "gibbs")
      out.push_back(Method::Gibbs);
    else
      throw UsageError("unknown method '" + item + "' (expected vb or gibbs)");
  }
  if (out.empty())
    throw UsageError("--methods is empty");
  return out;
}

inline int cmd_simulate(const SimulateOptions &o) {
  const auto t0 = std::chrono::steady_clock::now();
  SimulationScenario sc;
  if (o.scenario == "s1")
    sc = SimulationScenario::s1();
  else if (o.scenario == "s2")
    sc = SimulationScenario::s2();
  else if (o.scenario == "custom") {
    if (!o.n || !o.p)
      throw UsageError("--scenario custom requires --n and --p");
    sc.replicates = 1;
  } else
    throw UsageError("--scenario must be s1, s2 or custom");
  if (o.n)
    sc.n = *o.n;
  if (o.p)
    sc.p = *o.p;
  if (o.replicates)
    sc.replicates = *o.replicates;
  sc.active_fraction = o.active_fraction;
  sc.test_size = o.test_size;
  sc.seed = o.seed;
  as_usage([&] { sc.validate(); });

  SimulationOptions opts;
  opts.methods = parse_methods(o.methods);
  opts.cv.folds = o.folds;
  opts.cv.rho_grid = parse_rho_grid(o.rho_grid);
  opts.cv.nu0_2 = o.nu0sq;
  opts.cv.threads = 1;
  opts.cavi = cavi_config(o.tol, o.max_iter);
  opts.gibbs.iterations = o.iters;
  opts.gibbs.burn_in = o.burnin;
  opts.threads = o.threads;
  as_usage([&] {
    opts.cv.validate();
    opts.cavi.validate();
    opts.gibbs.validate();
  });
  const fs::path out = prepare_out_dir(o.out);

  const auto outcomes = run_simulation(sc, opts);
  const auto summary = summarize_by_method(outcomes, opts.methods);

  io::CsvWriter table(out / "table1.csv");
  table.field("metric");
  for (const auto &s : summary)
    table.field(method_name(s.method) + "_mean").field(method_name(s.method) + "_sd");
  table.end_row();
  auto metric_row = [&](const char *name, auto get) {
    table.field(name);
    for (const auto &s : summary) {
      const MetricSummary &m = get(s);
      if (m.count == 0)
        table.empty().empty();
      else
        table.field(m.mean).field(m.sd);
    }
    table.end_row();
  };
  metric_row("tpr", [](const MethodSummary &s) -> const MetricSummary & { return s.tpr; });
  metric_row("tnr", [](const MethodSummary &s) -> const MetricSummary & { return s.tnr; });
  metric_row("deviance", [](const MethodSummary &s) -> const MetricSummary & { return s.deviance; });
  metric_row("runtime_seconds", [](const MethodSummary &s) -> const MetricSummary & { return s.seconds; });

  io::CsvWriter reps(out / "replicates.csv");
  reps.row("replicate", "method", "tpr", "tnr", "deviance", "seconds", "rho", "nu2", "converged");
  for (const auto &oc : outcomes)
    for (const auto &r : oc.records) {
      reps.field(r.replicate).field(method_name(r.method));
      r.tpr ? reps.field(*r.tpr) : reps.empty();
      r.tnr ? reps.field(*r.tnr) : reps.empty();
      reps.field(r.deviance).field(r.seconds).field(r.rho).field(r.nu2).field(r.converged ? 1 : 0);
      reps.end_row();
    }

  io::CsvWriter pips(out / "pip_vs_truth.csv");
  pips.field("replicate").field("j").field("truth");
  for (Method m : opts.methods)
    pips.field("pip_" + method_name(m));
  pips.end_row();
  for (const auto &oc : outcomes) {
    const VectorXd truth = oc.truth.effective();
    for (Index j = 0; j < truth.size(); ++j) {
      pips.field(oc.replicate).field(static_cast<long>(j + 1)).field(truth(j));
      for (const auto &r : oc.records)
        pips.field(r.pip(j));
      pips.end_row();
    }
  }

  json report;
  report["schema_version"] = kSchemaVersion;
  report["scenario"] = {{"name", o.scenario},
                        {"n", sc.n},
                        {"p", sc.p},
                        {"active_count", sc.active_count()},
                        {"active_fraction", sc.active_fraction},
                        {"test_size", sc.test_size},
                        {"replicates", sc.replicates}};
  json tuned = json::array();
  for (const auto &oc : outcomes)
    tuned.push_back({{"replicate", oc.replicate}, {"rho", oc.cv.rho}, {"nu2", oc.cv.nu2}});
  report["tuned"] = tuned;
  json manifest = base_manifest("simulate");
  manifest["seed"] = o.seed;
  manifest["settings"] = {{"methods", o.methods}, {"iters", o.iters},       {"burnin", o.burnin},
                          {"folds", o.folds},     {"rho_grid", o.rho_grid}, {"nu0sq", o.nu0sq},
                          {"tol", o.tol},         {"max_iter", o.max_iter}};
  report["manifest"] = manifest;
  json tune_secs = json::array();
  for (const auto &oc : outcomes)
    tune_secs.push_back(oc.tune_seconds);
  report["timings"] = {{"total_seconds", seconds_since(t0)}, {"tune_seconds", tune_secs}};
  write_json(out / "report.json", report);

  for (const auto &s : summary)
    std::cout << method_name(s.method) << ": TPR " << s.tpr.mean << " TNR " << s.tnr.mean << " deviance "
              << s.deviance.mean << " runtime " << s.seconds.mean << "s\n";
  std::cout << "wrote " << out.string() << '\n';
  return kOk;
}

inline int cmd_predict(const PredictOptions &o) {
  const fs::path out = prepare_out_dir(o.out);
  const fs::path model_path(o.model);
  const json report = read_json(model_path);
  if (!report.contains("schema_version") || report["schema_version"].get<int>() != kSchemaVersion)
    throw ValidationError("'" + o.model + "' has an unsupported schema version");
  const std::string method = report.at("method").get<std::string>();
  const auto features = report.at("features").get<std::vector<std::string>>();
  const json &input = report.at("manifest").at("input");
  const auto raw_count = input.at("raw_feature_count").get<std::size_t>();
  const bool intercept = input.at("intercept").get<bool>();
  const std::string response = input.at("response").get<std::string>();

  const io::CsvTable table = io::read_csv(o.data);
  std::size_t skip = static_cast<std::size_t>(-1);
  const std::size_t width = table.header.empty() ? (table.rows.empty() ? 0 : table.rows[0].size())
                                                 : table.header.size();
  if (io::is_index_spec(response)) {
    // positional response: drop it only when the file still carries it
    if (width == raw_count + 1 && std::stoul(response) < width)
      skip = std::stoul(response);
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == response)
        skip = c;
  }
  io::RawDesign design = io::numeric_block(table, skip);
  if (design.names.size() != raw_count)
    throw ValidationError("prediction data has " + std::to_string(design.names.size()) +
                          " feature columns, model expects " + std::to_string(raw_count));
  if (!input.at("standardization").is_null()) {
    io::Standardization st;
    st.means = input["standardization"]["means"].get<std::vector<double>>();
    st.sds = input["standardization"]["sds"].get<std::vector<double>>();
    st.apply(design.X);
  }
  if (intercept)
    io::append_intercept(design.X, design.names);

  const fs::path state_path = model_path.parent_path() / report.at("state_file").get<std::string>();
  VectorXd probs;
  if (method == "vb") {
    const io::CsvTable st = io::read_csv(state_path);
    if (st.rows.size() != features.size())
      throw ValidationError("'" + state_path.string() + "' does not match the model's features");
    VectorXd w(static_cast<Index>(st.rows.size())), mu(static_cast<Index>(st.rows.size()));
    for (std::size_t j = 0; j < st.rows.size(); ++j) {
      const auto wj = io::parse_double(st.rows[j].at(1));
      const auto mj = io::parse_double(st.rows[j].at(2));
      if (!wj || !mj)
        throw ValidationError("'" + state_path.string() + "' row " + std::to_string(j) + " is malformed", {j});
      w(static_cast<Index>(j)) = *wj;
      mu(static_cast<Index>(j)) = *mj;
    }
    probs = predict_vb(w, mu, design.X);
  } else if (method == "gibbs") {
    const GibbsDraws draws = read_draws_csv(state_path);
    if (draws.beta.cols() != static_cast<Index>(features.size()))
      throw ValidationError("'" + state_path.string() + "' does not match the model's features");
    probs = predict_gibbs(draws, design.X);
  } else {
    throw ValidationError("'" + o.model + "' names unknown method '" + method + "'");
  }

  io::CsvWriter w(out / "predictions.csv");
  w.row("row", "probability");
  for (Index i = 0; i < probs.size(); ++i)
    w.row(static_cast<long>(i), probs(i));
  std::cout << "predict: " << probs.size() << " rows; wrote " << (out / "predictions.csv").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

namespace detail {

inline void add_data_options(CLI::App *cmd, DataOptions &d) {
  cmd->add_option("--data", d.path, "Input CSV (UTF-8, optional header)")->required();
  cmd->add_option("--response", d.response, "Response column: header name or 0-based index")->required();
  cmd->add_flag("--standardize", d.standardize, "Center and scale covariates to unit sample variance");
  cmd->add_flag("--intercept", d.intercept, "Append an intercept column, subject to selection");
}

inline const CLI::Validator kOpenUnit =
    CLI::Validator([](std::string &s) -> std::string {
      const auto v = io::parse_double(s);
      if (!v || !(*v > 0.0 && *v < 1.0))
        return "value must lie in the open interval (0, 1)";
      return {};
    }, "(0,1)");

} // namespace detail

inline int run(int argc, const char *const *argv) {
  CLI::App app{"Sparse Bayesian probit regression with spike-and-slab priors: "
               "mean-field variational Bayes and a collapsed Gibbs sampler"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  const int threads = default_thread_count();

  FitOptions fit_o;
  fit_o.threads = threads;
  auto *fit_cmd = app.add_subcommand("fit", "Fit the model to a CSV dataset");
  detail::add_data_options(fit_cmd, fit_o.data);
  fit_cmd->add_option("--method", fit_o.method, "vb or gibbs")->check(CLI::IsMember({"vb", "gibbs"}));
  fit_cmd->add_option("--rho", fit_o.rho, "Prior inclusion probability; tuned by CV when omitted")
      ->check(detail::kOpenUnit);
  fit_cmd->add_option("--nu0sq", fit_o.nu0sq, "Target prior variance of the linear predictor")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_o.seed);
  fit_cmd->add_option("--tol", fit_o.tol, "Relative convergence tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-iter", fit_o.max_iter)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--iters", fit_o.iters, "Gibbs iterations including burn-in")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--burnin", fit_o.burnin)->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--thin", fit_o.thin)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--chains", fit_o.chains)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--folds", fit_o.folds, "CV folds when tuning rho")->check(CLI::Range(2, 1000000));
  fit_cmd->add_option("--rho-grid", fit_o.rho_grid, "start:stop:step or comma list");
  fit_cmd->add_option("--out", fit_o.out, "Output directory")->required();
  fit_cmd->add_option("--threads", fit_o.threads)->check(CLI::PositiveNumber);

  TuneOptions tune_o;
  tune_o.threads = threads;
  auto *tune_cmd = app.add_subcommand("tune", "Choose rho by stratified K-fold CV deviance");
  detail::add_data_options(tune_cmd, tune_o.data);
  tune_cmd->add_option("--folds", tune_o.folds)->check(CLI::Range(2, 1000000));
  tune_cmd->add_option("--rho-grid", tune_o.rho_grid, "start:stop:step or comma list");
  tune_cmd->add_option("--nu0sq", tune_o.nu0sq)->check(CLI::PositiveNumber);
  tune_cmd->add_option("--seed", tune_o.seed);
  tune_cmd->add_option("--tol", tune_o.tol)->check(CLI::PositiveNumber);
  tune_cmd->add_option("--max-iter", tune_o.max_iter)->check(CLI::PositiveNumber);
  tune_cmd->add_option("--out", tune_o.out, "Output directory")->required();
  tune_cmd->add_option("--threads", tune_o.threads)->check(CLI::PositiveNumber);

  SimulateOptions sim_o;
  sim_o.threads = threads;
  auto *sim_cmd = app.add_subcommand("simulate", "Replicated simulation study (TPR, TNR, deviance, runtime)");
  sim_cmd->add_option("--scenario", sim_o.scenario, "s1 (p=200, n=1000, 50 reps), s2 (p=1000, n=500, 20 reps) "
                                                    "or custom")
      ->check(CLI::IsMember({"s1", "s2", "custom"}));
  sim_cmd->add_option("--n", sim_o.n)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--p", sim_o.p)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--replicates", sim_o.replicates)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--active-fraction", sim_o.active_fraction)->check(detail::kOpenUnit);
  sim_cmd->add_option("--test-size", sim_o.test_size)->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--methods", sim_o.methods, "Comma list of vb, gibbs");
  sim_cmd->add_option("--seed", sim_o.seed);
  sim_cmd->add_option("--iters", sim_o.iters)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--burnin", sim_o.burnin)->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--folds", sim_o.folds)->check(CLI::Range(2, 1000000));
  sim_cmd->add_option("--rho-grid", sim_o.rho_grid);
  sim_cmd->add_option("--nu0sq", sim_o.nu0sq)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--tol", sim_o.tol)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--max-iter", sim_o.max_iter)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim_o.out, "Output directory")->required();
  sim_cmd->add_option("--threads", sim_o.threads)->check(CLI::PositiveNumber);

  PredictOptions pred_o;
  auto *pred_cmd = app.add_subcommand("predict", "Predictive probabilities from a fitted model");
  pred_cmd->add_option("--model", pred_o.model, "report.json written by fit")->required();
  pred_cmd->add_option("--data", pred_o.data, "CSV of new covariate rows")->required();
  pred_cmd->add_option("--out", pred_o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*fit_cmd)
      return cmd_fit(fit_o);
    if (*tune_cmd)
      return cmd_tune(tune_o);
    if (*sim_cmd)
      return cmd_simulate(sim_o);
    if (*pred_cmd)
      return cmd_predict(pred_o);
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError &e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::domain_error &e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}

inline int run(const std::vector<std::string> &args) {
  std::vector<const char *> argv{kToolName};
  for (const auto &a : args)
    argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace sprobit::cli
