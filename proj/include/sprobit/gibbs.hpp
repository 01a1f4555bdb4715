#pragma once

// Blocked, collapsed Gibbs sampler for the masked probit model. Each
// iteration draws gamma | z coordinate-wise with beta integrated out, then
// beta_S | gamma, z on the active set S, then z | gamma, beta, y.
//
// z | gamma ~ N_n(0, I + nu2 X_S X_S') is evaluated through
// B_S = I/nu2 + G_S (determinant lemma and Woodbury), never forming an n x n
// matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sprobit/cavi.hpp"
#include "sprobit/errors.hpp"
#include "sprobit/model_core.hpp"
#include "sprobit/parallel.hpp"
#include "sprobit/rng.hpp"
#include "sprobit/stat_kernels.hpp"

namespace sprobit {

using ActiveSet = std::vector<Index>;  // sorted ascending

struct GibbsConfig {
  long iterations = 11000;  // T, including burn-in
  long burn_in = 1000;      // B
  std::uint64_t seed = 1;
  long thin = 1;
  int chains = 1;
  int threads = 1;
#ifdef NDEBUG
  long verify_cache_every = 0;
#else
  long verify_cache_every = 100;
#endif

  void validate() const {
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
      throw std::domain_error("gibbs config: need 0 <= burn_in < iterations");
    if (thin < 1)
      throw std::domain_error("gibbs config: thin must be at least 1");
    if (chains < 1)
      throw std::domain_error("gibbs config: chains must be at least 1");
  }

  long stored_per_chain() const { return (iterations - burn_in) / thin; }
};

struct GibbsState {
  VectorXi gamma;
  ActiveSet active;
  VectorXd beta;
  VectorXd z;
  VectorXd zeta;         // X'z
  double zz = 0.0;       // z'z
  double log_marginal = 0.0;  // log p(z | active), kept coherent with `active`
};

using GammaMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct GibbsDraws {
  GammaMatrix gamma;      // stored draws x p
  MatrixXd beta;          // stored draws x p
  std::vector<long> flip_counts;  // per coordinate, summed over chains
  int chains = 1;
  long draws_per_chain = 0;
};

namespace detail {

inline Eigen::LLT<MatrixXd> factorize_active_block(const GramCache &gram, const ActiveSet &S,
                                                   double nu2) {
  const Index k = static_cast<Index>(S.size());
  MatrixXd b(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index c = 0; c < k; ++c)
      b(a, c) = gram.G(S[a], S[c]);
  b.diagonal().array() += 1.0 / nu2;
  return factorize_spd(b, "active block B_S");
}

inline VectorXd gather(const VectorXd &v, const ActiveSet &S) {
  VectorXd out(static_cast<Index>(S.size()));
  for (std::size_t a = 0; a < S.size(); ++a)
    out(static_cast<Index>(a)) = v(S[a]);
  return out;
}

inline ActiveSet with_toggled(const ActiveSet &S, Index j) {
  ActiveSet out = S;
  auto it = std::lower_bound(out.begin(), out.end(), j);
  if (it != out.end() && *it == j)
    out.erase(it);
  else
    out.insert(it, j);
  return out;
}

} // namespace detail

/// log N_n(z; 0, I + nu2 X_S X_S') from the sufficient statistics zeta = X'z
/// and zz = z'z.
inline double log_marginal_from_stats(const VectorXd &zeta, double zz, Index n, const ActiveSet &S,
                                      const GramCache &gram, double nu2) {
  double value = -0.5 * static_cast<double>(n) * detail::kLog2Pi - 0.5 * zz;
  if (S.empty())
    return value;
  const auto llt = detail::factorize_active_block(gram, S, nu2);
  const VectorXd v = llt.matrixL().solve(detail::gather(zeta, S));
  value += -0.5 * (static_cast<double>(S.size()) * std::log(nu2) + detail::log_det_from_llt(llt)) +
           0.5 * v.squaredNorm();
  return value;
}

/// log N_n(z; 0, Lambda(S)) with Lambda(S) = I + nu2 X_S X_S'. O(|S|^3 + n|S|).
inline double log_marginal_z(const VectorXd &z, const ActiveSet &S, const GramCache &gram,
                             const Dataset &data, double nu2) {
  if (z.size() != data.n())
    throw std::invalid_argument("log_marginal_z: z has wrong length");
  if (!(nu2 > 0.0))
    throw std::domain_error("log_marginal_z: nu2 must be positive");
  VectorXd zeta = VectorXd::Zero(data.p());
  for (Index j : S) {
    if (j < 0 || j >= data.p())
      throw std::out_of_range("log_marginal_z: active index out of range");
    zeta(j) = data.X.col(j).dot(z);
  }
  return log_marginal_from_stats(zeta, z.squaredNorm(), data.n(), S, gram, nu2);
}

/// One pass over j = 0..p-1 drawing gamma_j from its collapsed conditional.
/// Only the alternative set's log-marginal is computed; the current one is the
/// cached state.log_marginal. `flips`, when given, is incremented per flip.
inline void gamma_sweep(GibbsState &state, const GramCache &gram, const Dataset &data,
                        const Hyperparameters &hyper, Rng &rng, std::vector<long> *flips = nullptr) {
  const double log_rho = std::log(hyper.rho);
  const double log_1m_rho = std::log1p(-hyper.rho);
  for (Index j = 0; j < data.p(); ++j) {
    ActiveSet alt = detail::with_toggled(state.active, j);
    const double l_alt = log_marginal_from_stats(state.zeta, state.zz, data.n(), alt, gram, hyper.nu2);
    const bool on = state.gamma(j) == 1;
    const double l1 = (on ? state.log_marginal : l_alt) + log_rho;
    const double l0 = (on ? l_alt : state.log_marginal) + log_1m_rho;
    const bool draw = rng.uniform() < expit(l1 - l0);
    if (draw != on) {
      state.gamma(j) = draw ? 1 : 0;
      state.active = std::move(alt);
      state.log_marginal = l_alt;
      if (flips)
        ++(*flips)[static_cast<std::size_t>(j)];
    }
  }
}

/// beta_S ~ N(B_S^{-1} zeta_S, B_S^{-1}), beta outside S set to zero.
inline VectorXd sample_beta_active(const GibbsState &state, const GramCache &gram, double nu2,
                                   Rng &rng) {
  VectorXd beta = VectorXd::Zero(gram.G.rows());
  if (state.active.empty())
    return beta;
  const auto llt = detail::factorize_active_block(gram, state.active, nu2);
  const Index k = static_cast<Index>(state.active.size());
  VectorXd eps(k);
  for (Index a = 0; a < k; ++a)
    eps(a) = rng.normal();
  const VectorXd mean = llt.solve(detail::gather(state.zeta, state.active));
  const VectorXd dev = llt.matrixU().solve(eps);
  for (Index a = 0; a < k; ++a)
    beta(state.active[static_cast<std::size_t>(a)]) = mean(a) + dev(a);
  return beta;
}

/// z_i ~ N(x_i'(gamma o beta), 1) truncated by y_i; refreshes zeta and zz.
inline void sample_latents(GibbsState &state, const Dataset &data, Rng &rng) {
  VectorXd lin = VectorXd::Zero(data.n());
  for (Index j : state.active)
    lin.noalias() += state.beta(j) * data.X.col(j);
  state.z.resize(data.n());
  for (Index i = 0; i < data.n(); ++i)
    state.z(i) = sample_trunc_norm(rng, lin(i), side_of(data.y(i)));
  state.zeta = data.X.transpose() * state.z;
  state.zz = state.z.squaredNorm();
}

/// Recomputes the log-marginal cache from scratch.
inline void refresh_log_marginal(GibbsState &state, const GramCache &gram, const Dataset &data, double nu2) {
  state.log_marginal = log_marginal_from_stats(state.zeta, state.zz, data.n(), state.active, gram, nu2);
}

/// gamma ~ iid Bernoulli(rho), beta = 0, z drawn given (gamma, beta, y).
inline GibbsState initial_gibbs_state(const Dataset &data, const GramCache &gram,
                                      const Hyperparameters &hyper, Rng &rng) {
  GibbsState st;
  st.gamma = VectorXi::Zero(data.p());
  for (Index j = 0; j < data.p(); ++j)
    if (rng.bernoulli(hyper.rho)) {
      st.gamma(j) = 1;
      st.active.push_back(j);
    }
  st.beta = VectorXd::Zero(data.p());
  sample_latents(st, data, rng);
  refresh_log_marginal(st, gram, data, hyper.nu2);
  return st;
}

namespace detail {

inline void run_single_chain(const Dataset &data, const GramCache &gram, const Hyperparameters &hyper,
                             const GibbsConfig &config, std::uint64_t seed, GibbsDraws &out,
                             Index row_offset) {
  Rng rng(seed);
  GibbsState st = initial_gibbs_state(data, gram, hyper, rng);
  Index row = row_offset;
  for (long t = 1; t <= config.iterations; ++t) {
    // zeta = X'z was refreshed with z; the cache is rebuilt once per iteration.
    refresh_log_marginal(st, gram, data, hyper.nu2);
    gamma_sweep(st, gram, data, hyper, rng, &out.flip_counts);
    if (config.verify_cache_every > 0 && t % config.verify_cache_every == 0) {
      const double fresh = log_marginal_from_stats(st.zeta, st.zz, data.n(), st.active, gram, hyper.nu2);
      if (std::abs(fresh - st.log_marginal) > 1e-9 * (1.0 + std::abs(fresh)))
        throw NumericalError("gibbs: log-marginal cache lost coherence at iteration " + std::to_string(t));
    }
    st.beta = sample_beta_active(st, gram, hyper.nu2, rng);
    sample_latents(st, data, rng);
    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      out.gamma.row(row) = st.gamma.cast<std::uint8_t>().transpose();
      out.beta.row(row) = st.beta.transpose();
      ++row;
    }
  }
}

} // namespace detail

/// Runs config.chains independent chains (chain c seeded with
/// derive_seed(config.seed, c)) and stacks their stored draws in chain order.
inline GibbsDraws run_chain(const Dataset &data, const GramCache &gram, const Hyperparameters &hyper,
                            const GibbsConfig &config) {
  hyper.validate();
  config.validate();
  const long per_chain = config.stored_per_chain();
  const auto p = static_cast<std::size_t>(data.p());

  std::vector<GibbsDraws> parts(static_cast<std::size_t>(config.chains));
  parallel_for(parts.size(), config.threads, [&](std::size_t c) {
    GibbsDraws &part = parts[c];
    part.gamma = GammaMatrix::Zero(per_chain, data.p());
    part.beta = MatrixXd::Zero(per_chain, data.p());
    part.flip_counts.assign(p, 0);
    detail::run_single_chain(data, gram, hyper, config, derive_seed(config.seed, c), part, 0);
  });

  if (parts.size() == 1) {
    parts[0].chains = 1;
    parts[0].draws_per_chain = per_chain;
    return std::move(parts[0]);
  }
  GibbsDraws draws;
  draws.chains = config.chains;
  draws.draws_per_chain = per_chain;
  draws.gamma.resize(per_chain * config.chains, data.p());
  draws.beta.resize(per_chain * config.chains, data.p());
  draws.flip_counts.assign(p, 0);
  for (std::size_t c = 0; c < parts.size(); ++c) {
    draws.gamma.middleRows(static_cast<Index>(c) * per_chain, per_chain) = parts[c].gamma;
    draws.beta.middleRows(static_cast<Index>(c) * per_chain, per_chain) = parts[c].beta;
    for (std::size_t j = 0; j < p; ++j)
      draws.flip_counts[j] += parts[c].flip_counts[j];
  }
  return draws;
}

inline GibbsDraws run_chain(const Dataset &data, const Hyperparameters &hyper, const GibbsConfig &config) {
  return run_chain(data, validate_and_cache(data), hyper, config);
}

struct PosteriorSummary {
  VectorXd pip;          // Pr[gamma_j = 1 | y]
  VectorXd mean_effect;  // E[gamma_j beta_j | y]
};

inline PosteriorSummary posterior_summaries(const GibbsDraws &draws) {
  if (draws.gamma.rows() == 0)
    throw std::domain_error("posterior_summaries: no stored draws");
  const double count = static_cast<double>(draws.gamma.rows());
  const MatrixXd g = draws.gamma.cast<double>();
  PosteriorSummary s;
  s.pip = g.colwise().sum().transpose() / count;
  s.mean_effect = g.cwiseProduct(draws.beta).colwise().sum().transpose() / count;
  return s;
}

/// Draw-averaged Pr[y_new = 1]: mean over draws of Phi(x_new'(gamma o beta)).
inline double predict_gibbs(const GibbsDraws &draws, const VectorXd &x_new) {
  if (draws.gamma.rows() == 0)
    throw std::domain_error("predict_gibbs: no stored draws");
  if (x_new.size() != draws.beta.cols())
    throw std::invalid_argument("predict_gibbs: x_new has wrong length");
  double acc = 0.0;
  for (Index t = 0; t < draws.beta.rows(); ++t) {
    double lin = 0.0;
    for (Index j = 0; j < x_new.size(); ++j)
      if (draws.gamma(t, j))
        lin += x_new(j) * draws.beta(t, j);
    acc += std_normal_cdf(lin);
  }
  return acc / static_cast<double>(draws.beta.rows());
}

/// Draw-averaged predictions for every row of `x_new`.
inline VectorXd predict_gibbs(const GibbsDraws &draws, const MatrixXd &x_new) {
  if (draws.gamma.rows() == 0)
    throw std::domain_error("predict_gibbs: no stored draws");
  if (x_new.cols() != draws.beta.cols())
    throw std::invalid_argument("predict_gibbs: column count does not match the draws");
  const MatrixXd effect = draws.gamma.cast<double>().cwiseProduct(draws.beta);
  const MatrixXd lin = x_new * effect.transpose();
  VectorXd out(x_new.rows());
  for (Index i = 0; i < x_new.rows(); ++i) {
    double acc = 0.0;
    for (Index t = 0; t < lin.cols(); ++t)
      acc += std_normal_cdf(lin(i, t));
    out(i) = acc / static_cast<double>(lin.cols());
  }
  return out;
}

} // namespace sprobit
