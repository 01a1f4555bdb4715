#pragma once

// Synthetic data, selection and prediction metrics, stratified K-fold tuning
// of the prior inclusion probability, and the replicated simulation harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sprobit/cavi.hpp"
#include "sprobit/gibbs.hpp"
#include "sprobit/model_core.hpp"
#include "sprobit/parallel.hpp"
#include "sprobit/rng.hpp"
#include "sprobit/stat_kernels.hpp"

namespace sprobit {

// ---------------------------------------------------------------------------
// Simulation design

struct SimulationScenario {
  Index n = 1000;
  Index p = 200;
  double active_fraction = 0.02;
  Index test_size = 500;
  int replicates = 50;
  std::uint64_t seed = 1;

  /// floor(active_fraction * p), guarded against representation error.
  Index active_count() const {
    return static_cast<Index>(std::floor(active_fraction * static_cast<double>(p) + 1e-9));
  }

  void validate() const {
    if (n < 1 || p < 1 || test_size < 0 || replicates < 1)
      throw std::domain_error("scenario: n, p, replicates must be positive");
    const Index q = active_count();
    if (q < 2 || q % 2 != 0)
      throw std::domain_error("scenario: active count floor(" + std::to_string(active_fraction) + " * " +
                              std::to_string(p) + ") = " + std::to_string(q) +
                              " must be even and at least 2");
    if (q > p)
      throw std::domain_error("scenario: more active coefficients than columns");
  }

  static SimulationScenario s1() { return {1000, 200, 0.02, 500, 50, 1}; }
  static SimulationScenario s2() { return {500, 1000, 0.02, 500, 20, 1}; }
};

struct SimulatedData {
  Dataset train;
  Dataset test;
  TruthParams truth;
};

/// Equally spaced active coefficients: the first half spans [-3, -1], the
/// second half [1, 3], both inclusive (a half of size one sits at -2 / 2).
inline VectorXd active_coefficients(Index count) {
  if (count < 2 || count % 2 != 0)
    throw std::domain_error("active_coefficients: count must be even and at least 2");
  const Index half = count / 2;
  VectorXd b(count);
  for (Index k = 0; k < half; ++k) {
    const double offset = half == 1 ? 1.0 : 2.0 * static_cast<double>(k) / static_cast<double>(half - 1);
    b(k) = -3.0 + offset;
    b(half + k) = 1.0 + offset;
  }
  return b;
}

namespace detail {

inline Dataset draw_probit_rows(Index rows, const VectorXd &effect, Rng &rng) {
  Dataset d;
  const Index p = effect.size();
  d.X.resize(rows, p);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < p; ++j)
      d.X(i, j) = rng.normal();
  const VectorXd lin = d.X * effect;
  d.y.resize(rows);
  for (Index i = 0; i < rows; ++i)
    d.y(i) = lin(i) + rng.normal() > 0.0 ? 1 : 0;
  return d;
}

} // namespace detail

/// iid N(0, 1) covariates, truth on the first active_count() coordinates,
/// y = 1{x'(gamma0 o beta0) + eps > 0}. Train rows are drawn before test rows.
inline SimulatedData generate_dataset(const SimulationScenario &scenario, Rng &rng) {
  scenario.validate();
  const Index q = scenario.active_count();
  SimulatedData out;
  out.truth.gamma0 = VectorXi::Zero(scenario.p);
  out.truth.gamma0.head(q).setOnes();
  out.truth.beta0 = VectorXd::Zero(scenario.p);
  out.truth.beta0.head(q) = active_coefficients(q);
  const VectorXd effect = out.truth.effective();
  out.train = detail::draw_probit_rows(scenario.n, effect, rng);
  out.test = detail::draw_probit_rows(scenario.test_size, effect, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct SelectionMetrics {
  std::optional<double> tpr;  // percent; absent when no active coordinate
  std::optional<double> tnr;  // percent; absent when no inactive coordinate
  std::vector<Index> selected_set;
  double threshold = 0.5;
};

/// Includes j iff pips_j > threshold (strictly).
inline SelectionMetrics selection_metrics(const VectorXd &pips, const TruthParams &truth,
                                          double threshold = 0.5) {
  if (pips.size() != truth.gamma0.size())
    throw std::invalid_argument("selection_metrics: dimension mismatch");
  SelectionMetrics out;
  out.threshold = threshold;
  long active = 0, inactive = 0, hit = 0, rejected = 0;
  for (Index j = 0; j < pips.size(); ++j) {
    const bool in = pips(j) > threshold;
    if (in)
      out.selected_set.push_back(j);
    if (truth.gamma0(j) == 1) {
      ++active;
      hit += in;
    } else {
      ++inactive;
      rejected += !in;
    }
  }
  if (active > 0)
    out.tpr = 100.0 * static_cast<double>(hit) / static_cast<double>(active);
  if (inactive > 0)
    out.tnr = 100.0 * static_cast<double>(rejected) / static_cast<double>(inactive);
  return out;
}

/// Plug-in predictive probability Phi(x'(w o mu)).
inline double predict_vb(const VectorXd &w, const VectorXd &mu, const VectorXd &x_new) {
  if (x_new.size() != w.size() || mu.size() != w.size())
    throw std::invalid_argument("predict_vb: dimension mismatch");
  return std_normal_cdf(x_new.dot(w.cwiseProduct(mu)));
}

inline double predict_vb(const VariationalState &state, const VectorXd &x_new) {
  return predict_vb(state.w, state.mu, x_new);
}

inline VectorXd predict_vb(const VectorXd &w, const VectorXd &mu, const MatrixXd &x_new) {
  if (x_new.cols() != w.size() || mu.size() != w.size())
    throw std::invalid_argument("predict_vb: column count does not match the model");
  const VectorXd lin = x_new * w.cwiseProduct(mu);
  return lin.unaryExpr([](double t) { return std_normal_cdf(t); });
}

inline VectorXd predict_vb(const VariationalState &state, const MatrixXd &x_new) {
  return predict_vb(state.w, state.mu, x_new);
}

inline constexpr double kProbabilityClamp = 1e-12;

/// -2 sum[y log p + (1 - y) log(1 - p)], with p clamped to [1e-12, 1 - 1e-12].
inline double test_deviance(const VectorXd &probs, const VectorXi &y) {
  if (probs.size() != y.size())
    throw std::invalid_argument("test_deviance: dimension mismatch");
  double dev = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs(i), kProbabilityClamp, 1.0 - kProbabilityClamp);
    dev += y(i) == 1 ? std::log(p) : std::log1p(-p);
  }
  return -2.0 * dev;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldAssignment {
  int folds = 0;
  std::vector<int> fold_of;  // per row, in [0, folds)
  bool unstratified = false;  // one class had no members

  std::vector<Index> members(int k) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == k)
        out.push_back(static_cast<Index>(i));
    return out;
  }

  std::vector<Index> complement(int k) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != k)
        out.push_back(static_cast<Index>(i));
    return out;
  }
};

/// Shuffles the rows of each class and deals them round-robin into K folds.
/// Dealing continues across classes (zeros first), so overall fold sizes also
/// differ by at most one.
inline FoldAssignment stratified_folds(const VectorXi &y, int K, Rng &rng) {
  if (K < 2)
    throw std::domain_error("stratified_folds: need at least two folds");
  if (y.size() < K)
    throw std::domain_error("stratified_folds: fewer rows than folds");
  FoldAssignment out;
  out.folds = K;
  out.fold_of.assign(static_cast<std::size_t>(y.size()), -1);
  std::size_t offset = 0;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<Index> rows;
    for (Index i = 0; i < y.size(); ++i)
      if (y(i) == cls)
        rows.push_back(i);
    if (rows.empty())
      out.unstratified = true;
    for (std::size_t i = rows.size(); i > 1; --i)
      std::swap(rows[i - 1], rows[rng.index(i)]);
    for (std::size_t r = 0; r < rows.size(); ++r)
      out.fold_of[static_cast<std::size_t>(rows[r])] = static_cast<int>((offset + r) % static_cast<std::size_t>(K));
    offset = (offset + rows.size()) % static_cast<std::size_t>(K);
  }
  return out;
}

struct CvConfig {
  int folds = 5;
  std::vector<double> rho_grid = default_rho_grid();
  double nu0_2 = 25.0;
  std::uint64_t seed = 1;
  int threads = 1;

  static std::vector<double> default_rho_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 10; ++k)
      g.push_back(k / 20.0);
    return g;
  }

  void validate() const {
    if (folds < 2)
      throw std::domain_error("cv config: need at least two folds");
    if (rho_grid.empty())
      throw std::domain_error("cv config: empty rho grid");
    for (std::size_t k = 0; k < rho_grid.size(); ++k) {
      if (!(rho_grid[k] > 0.0 && rho_grid[k] < 1.0))
        throw std::domain_error("cv config: grid values must lie in (0, 1)");
      if (k > 0 && !(rho_grid[k] > rho_grid[k - 1]))
        throw std::domain_error("cv config: grid must be strictly ascending");
    }
    if (!(nu0_2 > 0.0))
      throw std::domain_error("cv config: nu0_2 must be positive");
  }
};

struct CvPoint {
  double rho = 0.0;
  double nu2 = 0.0;
  double dev_cv = 0.0;
  std::vector<double> fold_deviance;
  int nonconverged_folds = 0;
};

struct CvResult {
  double rho = 0.0;
  double nu2 = 0.0;
  std::vector<CvPoint> curve;
  FoldAssignment folds;
  double worst_elbo_drop = 0.0;  // over every fold fit
};

/// Grid search over rho with nu2 = nu0_2 / (rho p), scored by mean held-out
/// deviance of the plug-in predictor. Ties go to the smaller rho.
inline CvResult tune_rho(const Dataset &train, const CvConfig &cv, const CaviConfig &cavi = {}) {
  cv.validate();
  cavi.validate();
  validate_dataset(train);

  CvResult out;
  Rng fold_rng(derive_seed(cv.seed, 0));
  out.folds = stratified_folds(train.y, cv.folds, fold_rng);

  struct FoldData {
    Dataset fit;
    GramCache gram;
    Dataset held_out;
  };
  std::vector<FoldData> fold_data(static_cast<std::size_t>(cv.folds));
  for (int k = 0; k < cv.folds; ++k) {
    auto &fd = fold_data[static_cast<std::size_t>(k)];
    fd.fit = subset_rows(train, out.folds.complement(k));
    fd.gram = validate_and_cache(fd.fit);
    fd.held_out = subset_rows(train, out.folds.members(k));
  }

  const std::size_t grid = cv.rho_grid.size();
  const auto K = static_cast<std::size_t>(cv.folds);
  std::vector<double> deviance(grid * K);
  std::vector<char> converged(grid * K);
  std::vector<double> drop(grid * K);
  parallel_for(grid * K, cv.threads, [&](std::size_t unit) {
    const std::size_t g = unit / K;
    const std::size_t k = unit % K;
    const double rho = cv.rho_grid[g];
    const Hyperparameters hyper(derive_nu2(rho, train.p(), cv.nu0_2), rho, cv.nu0_2);
    const auto &fd = fold_data[k];
    const CaviResult res = fit(fd.fit, fd.gram, hyper, cavi);
    deviance[unit] = test_deviance(predict_vb(res.state, fd.held_out.X), fd.held_out.y);
    converged[unit] = res.converged;
    drop[unit] = max_relative_elbo_drop(res.trace);
  });

  out.worst_elbo_drop = *std::max_element(drop.begin(), drop.end());
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid; ++g) {
    CvPoint pt;
    pt.rho = cv.rho_grid[g];
    pt.nu2 = derive_nu2(pt.rho, train.p(), cv.nu0_2);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      pt.fold_deviance.push_back(deviance[g * K + k]);
      sum += deviance[g * K + k];
      pt.nonconverged_folds += converged[g * K + k] ? 0 : 1;
    }
    pt.dev_cv = sum / static_cast<double>(K);
    out.curve.push_back(std::move(pt));
    if (out.curve[g].dev_cv < out.curve[best].dev_cv)
      best = g;
  }
  out.rho = out.curve[best].rho;
  out.nu2 = out.curve[best].nu2;
  return out;
}

// ---------------------------------------------------------------------------
// Replicated simulation

enum class Method { Vb, Gibbs };

inline std::string method_name(Method m) { return m == Method::Vb ? "vb" : "gibbs"; }

struct ReplicateRecord {
  int replicate = 0;
  Method method = Method::Vb;
  std::optional<double> tpr;
  std::optional<double> tnr;
  double deviance = 0.0;
  double seconds = 0.0;
  double rho = 0.0;
  double nu2 = 0.0;
  bool converged = true;
  VectorXd pip;
};

struct ReplicateOutcome {
  int replicate = 0;
  TruthParams truth;
  CvResult cv;
  double tune_seconds = 0.0;
  std::vector<ReplicateRecord> records;  // one per method, in request order
  double worst_elbo_drop = 0.0;          // CV fits and the final fit
};

struct SimulationOptions {
  std::vector<Method> methods{Method::Vb, Method::Gibbs};
  CvConfig cv;
  CaviConfig cavi;
  GibbsConfig gibbs;
  int threads = 1;  // replicates run concurrently
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// One replicate: draw data, tune rho by CV on the training set, then fit each
/// method with the tuned hyperparameters and score it on the test set.
/// Streams: derive_seed(derive_seed(seed, r), {0: data, 1: folds, 2: gibbs}).
inline ReplicateOutcome run_replicate(const SimulationScenario &scenario, const SimulationOptions &opts,
                                      int replicate) {
  using clock = std::chrono::steady_clock;
  const std::uint64_t rep_seed = derive_seed(scenario.seed, static_cast<std::uint64_t>(replicate));
  Rng data_rng(derive_seed(rep_seed, 0));
  SimulatedData sim = generate_dataset(scenario, data_rng);

  ReplicateOutcome out;
  out.replicate = replicate;
  out.truth = sim.truth;

  CvConfig cv = opts.cv;
  cv.seed = derive_seed(rep_seed, 1);
  auto start = clock::now();
  out.cv = tune_rho(sim.train, cv, opts.cavi);
  out.tune_seconds = detail::seconds_since(start);
  out.worst_elbo_drop = out.cv.worst_elbo_drop;

  const Hyperparameters hyper(out.cv.nu2, out.cv.rho, cv.nu0_2);
  const GramCache gram = validate_and_cache(sim.train);

  for (Method method : opts.methods) {
    ReplicateRecord rec;
    rec.replicate = replicate;
    rec.method = method;
    rec.rho = hyper.rho;
    rec.nu2 = hyper.nu2;
    VectorXd probs;
    start = clock::now();
    if (method == Method::Vb) {
      const CaviResult res = fit(sim.train, gram, hyper, opts.cavi);
      rec.seconds = detail::seconds_since(start);
      rec.converged = res.converged;
      rec.pip = res.state.w;
      probs = predict_vb(res.state, sim.test.X);
      out.worst_elbo_drop = std::max(out.worst_elbo_drop, max_relative_elbo_drop(res.trace));
    } else {
      GibbsConfig gc = opts.gibbs;
      gc.seed = derive_seed(rep_seed, 2);
      const GibbsDraws draws = run_chain(sim.train, gram, hyper, gc);
      rec.seconds = detail::seconds_since(start);
      rec.pip = posterior_summaries(draws).pip;
      probs = predict_gibbs(draws, sim.test.X);
    }
    const SelectionMetrics sel = selection_metrics(rec.pip, sim.truth);
    rec.tpr = sel.tpr;
    rec.tnr = sel.tnr;
    rec.deviance = sim.test.n() > 0 ? test_deviance(probs, sim.test.y) : 0.0;
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ReplicateOutcome> run_simulation(const SimulationScenario &scenario,
                                                    const SimulationOptions &opts) {
  scenario.validate();
  std::vector<ReplicateOutcome> out(static_cast<std::size_t>(scenario.replicates));
  parallel_for(out.size(), opts.threads, [&](std::size_t r) {
    out[r] = run_replicate(scenario, opts, static_cast<int>(r));
  });
  return out;
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

inline MetricSummary summarize(const std::vector<double> &values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty())
    return s;
  for (double v : values)
    s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values)
      ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct MethodSummary {
  Method method = Method::Vb;
  MetricSummary tpr, tnr, deviance, seconds;
};

/// Per-method mean and standard deviation across replicates; undefined
/// rates are skipped.
inline std::vector<MethodSummary> summarize_by_method(const std::vector<ReplicateOutcome> &outcomes,
                                                      const std::vector<Method> &methods) {
  std::vector<MethodSummary> out;
  for (Method m : methods) {
    std::vector<double> tpr, tnr, dev, sec;
    for (const auto &o : outcomes)
      for (const auto &r : o.records)
        if (r.method == m) {
          if (r.tpr)
            tpr.push_back(*r.tpr);
          if (r.tnr)
            tnr.push_back(*r.tnr);
          dev.push_back(r.deviance);
          sec.push_back(r.seconds);
        }
    out.push_back({m, summarize(tpr), summarize(tnr), summarize(dev), summarize(sec)});
  }
  return out;
}

} // namespace sprobit
