#pragma once

// Scalar normal-distribution primitives shared by the variational and MCMC
// engines: log-cdf, inverse Mills ratio, moments of and draws from a unit
// variance normal truncated to a half-line.

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

#include "sprobit/rng.hpp"

namespace sprobit {

/// Half-line a latent variable is restricted to: (0, inf) when y = 1 and
/// (-inf, 0] when y = 0.
enum class TruncationSide { Positive, NonPositive };

constexpr TruncationSide side_of(int y) {
  return y == 1 ? TruncationSide::Positive : TruncationSide::NonPositive;
}

/// Sign indicator k = 2y - 1.
constexpr double sign_of(TruncationSide side) {
  return side == TruncationSide::Positive ? 1.0 : -1.0;
}

constexpr TruncationSide side_from_sign(double k) {
  return k > 0 ? TruncationSide::Positive : TruncationSide::NonPositive;
}

namespace detail {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline void require_finite(double t, const char *where) {
  if (!std::isfinite(t))
    throw std::domain_error(std::string(where) + ": argument must be finite");
}

// Mills ratio R(x) = (1 - Phi(x)) / phi(x) by backward evaluation of
// R(x) = 1/(x + 1/(x + 2/(x + 3/(x + ...)))). Only used for x >= 30, where
// 40 levels are far past double precision.
inline double mills_ratio_cf(double x) {
  double t = x;
  for (int k = 40; k >= 1; --k)
    t = x + k / t;
  return 1.0 / t;
}

inline constexpr double kMillsSwitch = -30.0;

} // namespace detail

inline double std_normal_log_pdf(double t) { return -0.5 * t * t - detail::kLogSqrt2Pi; }

inline double std_normal_pdf(double t) { return std::exp(std_normal_log_pdf(t)); }

/// Phi(t), relative-accurate in the lower tail.
inline double std_normal_cdf(double t) { return 0.5 * std::erfc(-t * detail::kInvSqrt2); }

/// log Phi(t).
inline double log_std_normal_cdf(double t) {
  detail::require_finite(t, "log_std_normal_cdf");
  if (t > 0.0)
    return std::log1p(-0.5 * std::erfc(t * detail::kInvSqrt2));
  if (t >= detail::kMillsSwitch)
    return std::log(0.5 * std::erfc(-t * detail::kInvSqrt2));
  return std_normal_log_pdf(t) + std::log(detail::mills_ratio_cf(-t));
}

/// Inverse Mills ratio phi(t) / Phi(t). Approaches -t as t -> -inf.
inline double inverse_mills(double t) {
  detail::require_finite(t, "inverse_mills");
  if (t >= detail::kMillsSwitch)
    return std_normal_pdf(t) / std_normal_cdf(t);
  return 1.0 / detail::mills_ratio_cf(-t);
}

/// Mean of N(m, 1) restricted to `side`: m + k * lambda(k * m).
inline double trunc_norm_mean(double m, TruncationSide side) {
  detail::require_finite(m, "trunc_norm_mean");
  const double k = sign_of(side);
  return m + k * inverse_mills(k * m);
}

/// E[z^2] = 1 + m * E[z] for the same truncated normal.
inline double trunc_norm_second_moment(double m, double z_bar) {
  if (!std::isfinite(m) || !std::isfinite(z_bar))
    throw std::domain_error("trunc_norm_second_moment: arguments must be finite");
  return 1.0 + m * z_bar;
}

/// E[(z - m)^2] = 1 - k m lambda(k m).
inline double trunc_norm_residual_var(double m, TruncationSide side) {
  detail::require_finite(m, "trunc_norm_residual_var");
  const double km = sign_of(side) * m;
  return 1.0 - km * inverse_mills(km);
}

namespace detail {

// Standard normal restricted to (a, inf).
inline double sample_std_normal_above(Rng &rng, double a) {
  if (a <= -5.0) {
    // Plain rejection; acceptance probability is at least Phi(5).
    for (;;) {
      const double x = rng.normal();
      if (x > a)
        return x;
    }
  }
  if (a < 5.0) {
    // Inverse cdf through the upper tail: x = -Phi^{-1}(u * Phi(-a)).
    for (;;) {
      const double q = rng.uniform() * std::erfc(a * kInvSqrt2);
      const double x = std::numbers::sqrt2 * boost::math::erfc_inv(q);
      if (x > a)
        return x;
    }
  }
  // Exponential proposal with the optimal rate for the tail beyond a.
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double x = a + rng.exponential() / alpha;
    const double d = x - alpha;
    if (rng.uniform() <= std::exp(-0.5 * d * d))
      return x;
  }
}

} // namespace detail

/// Exact draw from N(m, 1) restricted to `side`.
inline double sample_trunc_norm(Rng &rng, double m, TruncationSide side) {
  detail::require_finite(m, "sample_trunc_norm");
  if (side == TruncationSide::Positive) {
    for (;;) {
      const double z = m + detail::sample_std_normal_above(rng, -m);
      if (z > 0.0)
        return z;
    }
  }
  // z <= 0 with mean m  <=>  -z >= 0 with mean -m.
  return -(-m + detail::sample_std_normal_above(rng, m));
}

inline double expit(double x) {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("logit: probability must lie in (0, 1)");
  return std::log(p) - std::log1p(-p);
}

} // namespace sprobit
