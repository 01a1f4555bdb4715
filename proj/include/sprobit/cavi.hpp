#pragma once

// Mean-field coordinate ascent for the masked probit model.
//
// q(beta, z, gamma) = N(beta; mu, Sigma) * prod_i TN(z_i; m_i, 1, A_{y_i})
//                     * prod_j Bernoulli(gamma_j; w_j)
//
// One sweep updates Omega -> (Sigma, mu) -> (m, z_bar) -> w, then evaluates the
// closed-form ELBO.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sprobit/errors.hpp"
#include "sprobit/model_core.hpp"
#include "sprobit/stat_kernels.hpp"

namespace sprobit {

enum class ConvergenceRule { Elbo, Param, Either };

struct CaviConfig {
  int max_iter = 500;
  double tol_elbo = 1e-6;
  double tol_param = 1e-6;
  ConvergenceRule convergence_rule = ConvergenceRule::Either;

  void validate() const {
    if (max_iter < 1)
      throw std::domain_error("cavi config: max_iter must be at least 1");
    if (!(tol_elbo > 0.0) || !(tol_param > 0.0))
      throw std::domain_error("cavi config: tolerances must be positive");
  }
};

struct VariationalState {
  VectorXd mu;
  MatrixXd Sigma;
  VectorXd w;
  VectorXd z_bar;
  VectorXd m;
  int iteration = 0;
  // log det Sigma as produced by the factorization; recomputed when absent.
  std::optional<double> log_det_sigma;
};

/// The six ELBO contributions. Entropies are -E_q[log q].
struct ElboTerms {
  double likelihood = 0.0;
  double prior_beta = 0.0;
  double prior_gamma = 0.0;
  double entropy_beta = 0.0;
  double entropy_z = 0.0;
  double entropy_gamma = 0.0;

  double total() const {
    return likelihood + prior_beta + prior_gamma + entropy_beta + entropy_z + entropy_gamma;
  }
};

struct ElboTrace {
  std::vector<double> values;
  std::vector<ElboTerms> terms;
};

struct CaviResult {
  VariationalState state;
  ElboTrace trace;
  bool converged = false;
};

namespace detail {

inline constexpr double kLog2Pi = 1.83787706640934548356;

// Index of the first non-positive pivot of an unpivoted Cholesky of `a`.
inline Index failing_pivot(const MatrixXd &a) {
  MatrixXd l = MatrixXd::Zero(a.rows(), a.cols());
  for (Index j = 0; j < a.rows(); ++j) {
    double d = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0))
      return j;
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < a.rows(); ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return -1;
}

inline Eigen::LLT<MatrixXd> factorize_spd(const MatrixXd &a, const char *what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    const Index pivot = failing_pivot(a);
    throw NumericalError(std::string(what) + ": Cholesky factorization failed at pivot " +
                             std::to_string(pivot),
                         pivot);
  }
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<MatrixXd> &llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// x log x with 0 log 0 = 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

} // namespace detail

/// E_q[gamma gamma'] = W(I - W) + w w': diagonal w_j, off-diagonal w_j w_k.
inline MatrixXd compute_omega(const VectorXd &w) {
  for (Index j = 0; j < w.size(); ++j)
    if (!(w(j) >= 0.0 && w(j) <= 1.0))
      throw std::domain_error("compute_omega: inclusion probability outside [0, 1] at index " +
                              std::to_string(j));
  MatrixXd omega = w * w.transpose();
  omega.diagonal() = w;
  return omega;
}

struct BetaFactor {
  VectorXd mu;
  MatrixXd Sigma;
  double log_det_sigma = 0.0;
};

/// Sigma = (I/nu2 + G o Omega)^{-1},  mu = Sigma W X' z_bar.
inline BetaFactor update_beta_factor(const Dataset &data, const GramCache &gram,
                                     const MatrixXd &omega, const VectorXd &w,
                                     const VectorXd &z_bar, double nu2) {
  const Index p = gram.G.rows();
  if (omega.rows() != p || omega.cols() != p || w.size() != p || z_bar.size() != data.n())
    throw std::invalid_argument("update_beta_factor: dimension mismatch");
  if (!(nu2 > 0.0))
    throw std::domain_error("update_beta_factor: nu2 must be positive");

  MatrixXd precision = gram.G.cwiseProduct(omega);
  precision.diagonal().array() += 1.0 / nu2;
  const auto llt = detail::factorize_spd(precision, "update_beta_factor");

  BetaFactor out;
  out.Sigma = llt.solve(MatrixXd::Identity(p, p));
  out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose()).eval();
  const VectorXd rhs = w.cwiseProduct(data.X.transpose() * z_bar);
  out.mu = llt.solve(rhs);
  out.log_det_sigma = -detail::log_det_from_llt(llt);
  return out;
}

struct LatentMeans {
  VectorXd m;
  VectorXd z_bar;
};

/// m = X (w o mu);  z_bar_i = m_i + k_i lambda(k_i m_i).
inline LatentMeans update_latent_means(const Dataset &data, const VectorXd &w,
                                       const VectorXd &mu) {
  if (w.size() != data.p() || mu.size() != data.p())
    throw std::invalid_argument("update_latent_means: dimension mismatch");
  LatentMeans out;
  out.m = data.X * w.cwiseProduct(mu);
  out.z_bar.resize(out.m.size());
  for (Index i = 0; i < out.m.size(); ++i)
    out.z_bar(i) = trunc_norm_mean(out.m(i), side_of(data.y(i)));
  return out;
}

struct InclusionUpdate {
  VectorXd w;
  VectorXd eta;  // logit of each new w_j, as computed in sweep order
};

/// Gauss-Seidel pass over j = 0..p-1 setting w_j = expit(eta_j) with
///   eta_j = logit(rho) + mu_j X_j' z_bar - (Sigma_jj + mu_j^2) G_jj / 2
///           - sum_{k != j} (Sigma_jk + mu_j mu_k) w_k G_jk,
/// where w_k already holds its new value for k < j.
///
/// The cross sum is kept as two running vectors, s = (Sigma o G) w and
/// t = G (w o mu), each corrected by one column after every coordinate.
inline InclusionUpdate update_inclusion(const GramCache &gram, const Dataset &data,
                                        const VariationalState &state, double rho) {
  const Index p = gram.G.rows();
  const MatrixXd &G = gram.G;
  const double prior_logit = logit(rho);
  const VectorXd xz = data.X.transpose() * state.z_bar;
  const MatrixXd sg = state.Sigma.cwiseProduct(G);

  InclusionUpdate out;
  out.w = state.w;
  out.eta.resize(p);
  VectorXd s = sg * out.w;
  VectorXd t = G * out.w.cwiseProduct(state.mu);

  for (Index j = 0; j < p; ++j) {
    const double mu_j = state.mu(j);
    const double g_jj = G(j, j);
    const double w_j = out.w(j);
    const double cross = (s(j) - sg(j, j) * w_j) + mu_j * (t(j) - g_jj * w_j * mu_j);
    const double eta = prior_logit + mu_j * xz(j) - 0.5 * (state.Sigma(j, j) + mu_j * mu_j) * g_jj - cross;
    const double w_new = expit(eta);
    out.eta(j) = eta;
    const double delta = w_new - w_j;
    if (delta != 0.0) {
      s.noalias() += delta * sg.col(j);
      t.noalias() += (delta * mu_j) * G.col(j);
    }
    out.w(j) = w_new;
  }
  return out;
}

/// Closed-form ELBO. The q(z) factor is parameterized by state.m (and the
/// matching state.z_bar); q(beta) by (mu, Sigma); q(gamma) by w.
inline ElboTerms compute_elbo(const Dataset &data, const GramCache &gram,
                              const VariationalState &state, const Hyperparameters &hyper) {
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(state.mu.size());
  const double nu2 = hyper.nu2;
  const double rho = hyper.rho;
  const VectorXd &w = state.w;
  const VectorXd &mu = state.mu;

  double s_zz = 0.0;
  double resid = 0.0;
  double log_cdf = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const TruncationSide side = side_of(data.y(i));
    const double m = state.m(i);
    s_zz += trunc_norm_second_moment(m, state.z_bar(i));
    resid += trunc_norm_residual_var(m, side);
    log_cdf += log_std_normal_cdf(sign_of(side) * m);
  }

  const double cross = data.n() > 0 ? mu.dot(w.cwiseProduct(data.X.transpose() * state.z_bar)) : 0.0;
  // tr[(G o Omega) C_beta] with C_beta = Sigma + mu mu'.
  const MatrixXd omega = compute_omega(w);
  const double trace_term =
      (gram.G.array() * omega.array() * (state.Sigma + mu * mu.transpose()).array()).sum();

  double log_det_sigma;
  if (state.log_det_sigma)
    log_det_sigma = *state.log_det_sigma;
  else
    log_det_sigma = detail::log_det_from_llt(detail::factorize_spd(state.Sigma, "compute_elbo"));

  ElboTerms e;
  e.likelihood = -0.5 * n * detail::kLog2Pi - 0.5 * (s_zz - 2.0 * cross + trace_term);
  e.prior_beta = -0.5 * p * (detail::kLog2Pi + std::log(nu2)) -
                 (state.Sigma.trace() + mu.squaredNorm()) / (2.0 * nu2);
  const double log_rho = std::log(rho);
  const double log_1m_rho = std::log1p(-rho);
  for (Index j = 0; j < w.size(); ++j) {
    e.prior_gamma += w(j) * log_rho + (1.0 - w(j)) * log_1m_rho;
    e.entropy_gamma -= detail::xlogx(w(j)) + detail::xlogx(1.0 - w(j));
  }
  e.entropy_beta = 0.5 * p * detail::kLog2Pi + 0.5 * log_det_sigma + 0.5 * p;
  e.entropy_z = 0.5 * n * detail::kLog2Pi + 0.5 * resid + log_cdf;
  return e;
}

namespace detail {

inline double max_relative_change(const VectorXd &now, const VectorXd &before) {
  double worst = 0.0;
  for (Index j = 0; j < now.size(); ++j)
    worst = std::max(worst, std::abs(now(j) - before(j)) / (1.0 + std::abs(before(j))));
  return worst;
}

} // namespace detail

/// Largest relative ELBO decrease between consecutive sweeps,
/// (L_t - L_{t+1}) / (1 + |L_t|); zero or negative when the trace never drops.
inline double max_relative_elbo_drop(const ElboTrace &trace) {
  double worst = 0.0;
  for (std::size_t t = 1; t < trace.values.size(); ++t)
    worst = std::max(worst, (trace.values[t - 1] - trace.values[t]) /
                                (1.0 + std::abs(trace.values[t - 1])));
  return worst;
}

/// Runs coordinate ascent from w = rho, mu = 0 until the configured rule
/// fires or max_iter sweeps are done. Non-convergence is reported through
/// CaviResult::converged, not an exception.
inline CaviResult fit(const Dataset &data, const GramCache &gram, const Hyperparameters &hyper,
                      const CaviConfig &config = {}) {
  hyper.validate();
  config.validate();
  const Index p = data.p();

  CaviResult result;
  VariationalState &st = result.state;
  st.w = VectorXd::Constant(p, hyper.rho);
  st.mu = VectorXd::Zero(p);
  st.Sigma = hyper.nu2 * MatrixXd::Identity(p, p);
  st.log_det_sigma = static_cast<double>(p) * std::log(hyper.nu2);
  {
    auto lm = update_latent_means(data, st.w, st.mu);
    st.m = std::move(lm.m);
    st.z_bar = std::move(lm.z_bar);
  }

  for (int it = 1; it <= config.max_iter; ++it) {
    const VectorXd mu_before = st.mu;
    const VectorXd w_before = st.w;

    const MatrixXd omega = compute_omega(st.w);
    auto beta = update_beta_factor(data, gram, omega, st.w, st.z_bar, hyper.nu2);
    st.mu = std::move(beta.mu);
    st.Sigma = std::move(beta.Sigma);
    st.log_det_sigma = beta.log_det_sigma;

    auto lm = update_latent_means(data, st.w, st.mu);
    st.m = std::move(lm.m);
    st.z_bar = std::move(lm.z_bar);

    st.w = update_inclusion(gram, data, st, hyper.rho).w;
    st.iteration = it;
    // Bring q(z) up to date with the new w so the returned state and the
    // recorded ELBO describe the same distribution. This is one more exact
    // coordinate step, so monotonicity is untouched.
    lm = update_latent_means(data, st.w, st.mu);
    st.m = std::move(lm.m);
    st.z_bar = std::move(lm.z_bar);

    const ElboTerms terms = compute_elbo(data, gram, st, hyper);
    const double elbo = terms.total();
    result.trace.terms.push_back(terms);
    result.trace.values.push_back(elbo);

    const double param_change = std::max(detail::max_relative_change(st.mu, mu_before),
                                         detail::max_relative_change(st.w, w_before));
    bool elbo_done = false;
    if (result.trace.values.size() >= 2) {
      const double prev = result.trace.values[result.trace.values.size() - 2];
      elbo_done = std::abs(elbo - prev) / (1.0 + std::abs(prev)) < config.tol_elbo;
    }
    const bool param_done = param_change < config.tol_param;

    bool done = false;
    switch (config.convergence_rule) {
    case ConvergenceRule::Elbo: done = elbo_done; break;
    case ConvergenceRule::Param: done = param_done; break;
    case ConvergenceRule::Either: done = elbo_done || param_done; break;
    }
    if (done) {
      result.converged = true;
      break;
    }
  }
  return result;
}

inline CaviResult fit(const Dataset &data, const Hyperparameters &hyper, const CaviConfig &config = {}) {
  return fit(data, validate_and_cache(data), hyper, config);
}

} // namespace sprobit
