#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace sprobit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kSqrt2OverPi = std::sqrt(2.0 / M_PI);

// 50-digit reference values (mpmath), frozen.
constexpr double kLogPhiMinus10 = -53.231285150512470578347027354131209878916;
constexpr double kLogPhiMinus20 = -203.91715537109726393680445865452690005251;
constexpr double kLogPhiMinus30 = -454.32124395634319710735577133764496565640;
constexpr double kLogPhiMinus38 = -726.55721601882013009650351751713325084526;
constexpr double kLogPhi5 = -2.8665161296376359338459625849560923497520e-7;
constexpr double kLogPhi8 = -6.2209605742717860585335184530541259141270e-16;
constexpr double kLambdaMinus8 = 8.1213681122361126806535202389055146538615;
constexpr double kLambdaMinus30 = 30.033259667433677037071124100012254714640;
constexpr double kLambdaMinus35 = 35.028524970596687870278653948729394773017;
constexpr double kLambda3 = 0.0044378390421256637933021043109025983805126;
constexpr double kLambda30 = 1.4736461348785475190494932660450744870600e-196;
constexpr double kTruncMean15 = 1.6387897504588507562023231082348780799780;
constexpr double kSecondMomentMinus1 = 0.47486472383901879091090946360942128669288;
constexpr double kResidualMinus2 = 5.7464310656456817345980653816530700248202;
constexpr double kTruncMeanMinus8 = 0.12136811223611268065352023890551465386152;

double upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

} // namespace

TEST_CASE("TruncationSide maps to the sign indicator", "[stat_kernels]") {
  CHECK(side_of(1) == TruncationSide::Positive);
  CHECK(side_of(0) == TruncationSide::NonPositive);
  CHECK(sign_of(TruncationSide::Positive) == 1.0);
  CHECK(sign_of(TruncationSide::NonPositive) == -1.0);
  for (int y : {0, 1})
    CHECK(side_from_sign(2.0 * y - 1.0) == side_of(y));
}

TEST_CASE("log_std_normal_cdf examples", "[stat_kernels]") {
  CHECK_THAT(log_std_normal_cdf(0.0), WithinAbs(-0.6931471805599453, 1e-16));
  CHECK_THAT(log_std_normal_cdf(40.0), WithinAbs(0.0, 1e-15));
  CHECK_THAT(log_std_normal_cdf(-10.0), WithinRel(kLogPhiMinus10, 1e-12));
}

TEST_CASE("log_std_normal_cdf is accurate across [-38, 8]", "[stat_kernels]") {
  CHECK_THAT(log_std_normal_cdf(-20.0), WithinRel(kLogPhiMinus20, 1e-12));
  CHECK_THAT(log_std_normal_cdf(-30.0), WithinRel(kLogPhiMinus30, 1e-12));
  CHECK_THAT(log_std_normal_cdf(-38.0), WithinRel(kLogPhiMinus38, 1e-12));
  CHECK_THAT(log_std_normal_cdf(5.0), WithinRel(kLogPhi5, 1e-12));
  CHECK_THAT(log_std_normal_cdf(8.0), WithinRel(kLogPhi8, 1e-12));
  // Both sides of the switch to the continued fraction agree.
  CHECK_THAT(log_std_normal_cdf(-30.0 + 1e-9), WithinRel(log_std_normal_cdf(-30.0 - 1e-9), 1e-9));
}

TEST_CASE("log_std_normal_cdf is monotone and finite", "[stat_kernels]") {
  double prev = -kInf;
  for (int k = 0; k <= 4600; ++k) {
    const double t = -38.0 + 0.01 * k;
    const double v = log_std_normal_cdf(t);
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(log_std_normal_cdf(kNaN), std::domain_error);
  CHECK_THROWS_AS(log_std_normal_cdf(-kInf), std::domain_error);
}

TEST_CASE("inverse_mills examples", "[stat_kernels]") {
  CHECK_THAT(inverse_mills(0.0), WithinRel(0.7978845608028654, 1e-15));
  CHECK_THAT(inverse_mills(30.0), WithinRel(kLambda30, 1e-10));
  CHECK_THAT(inverse_mills(30.0), WithinRel(std_normal_pdf(30.0), 1e-10));
  CHECK_THAT(inverse_mills(-8.0), WithinRel(kLambdaMinus8, 1e-10));
  CHECK_THAT(inverse_mills(3.0), WithinRel(kLambda3, 1e-10));
  CHECK_THAT(inverse_mills(-30.0), WithinRel(kLambdaMinus30, 1e-10));
  CHECK_THAT(inverse_mills(-35.0), WithinRel(kLambdaMinus35, 1e-10));
  CHECK_THROWS_AS(inverse_mills(kInf), std::domain_error);
}

TEST_CASE("inverse_mills is positive and strictly decreasing", "[stat_kernels]") {
  double prev = kInf;
  for (int k = 0; k <= 6000; ++k) {
    const double t = -30.0 + 0.01 * k;
    const double v = inverse_mills(t);
    REQUIRE(v > 0.0);
    REQUIRE(v < prev);
    prev = v;
  }
  // Deep lower tail: finite and close to -t.
  for (double t : {-40.0, -100.0, -1e3, -1e6}) {
    const double v = inverse_mills(t);
    REQUIRE(std::isfinite(v));
    CHECK_THAT(v, WithinRel(-t, 1.0 / (t * t) + 1e-15));
  }
}

TEST_CASE("trunc_norm_mean examples", "[stat_kernels]") {
  CHECK_THAT(trunc_norm_mean(0.0, TruncationSide::Positive), WithinRel(kSqrt2OverPi, 1e-15));
  CHECK_THAT(trunc_norm_mean(0.0, TruncationSide::NonPositive), WithinRel(-kSqrt2OverPi, 1e-15));
  CHECK_THAT(trunc_norm_mean(1.5, TruncationSide::Positive), WithinAbs(kTruncMean15, 1e-12));
  CHECK_THAT(trunc_norm_mean(-8.0, TruncationSide::Positive), WithinAbs(kTruncMeanMinus8, 1e-12));
  CHECK_THROWS_AS(trunc_norm_mean(kNaN, TruncationSide::Positive), std::domain_error);
}

TEST_CASE("trunc_norm_mean keeps the sign of its side", "[stat_kernels]") {
  for (double m : {-1e6, -200.0, -40.0, -30.0, -8.0, -1.0, 0.0, 1.0, 8.0, 30.0, 40.0, 200.0, 1e6}) {
    CHECK(trunc_norm_mean(m, TruncationSide::Positive) > 0.0);
    CHECK(trunc_norm_mean(m, TruncationSide::NonPositive) < 0.0);
  }
}

TEST_CASE("trunc_norm_second_moment examples", "[stat_kernels]") {
  CHECK_THAT(trunc_norm_second_moment(0.0, kSqrt2OverPi), WithinAbs(1.0, 1e-15));
  const double zb2 = trunc_norm_mean(2.0, TruncationSide::Positive);
  CHECK(trunc_norm_second_moment(2.0, zb2) == 1.0 + 2.0 * zb2);
  const double zbm1 = trunc_norm_mean(-1.0, TruncationSide::Positive);
  CHECK_THAT(trunc_norm_second_moment(-1.0, zbm1), WithinAbs(kSecondMomentMinus1, 1e-12));
  CHECK_THROWS_AS(trunc_norm_second_moment(kNaN, 1.0), std::domain_error);
}

TEST_CASE("trunc_norm_residual_var examples", "[stat_kernels]") {
  CHECK(trunc_norm_residual_var(0.0, TruncationSide::Positive) == 1.0);
  CHECK(trunc_norm_residual_var(0.0, TruncationSide::NonPositive) == 1.0);
  CHECK(trunc_norm_residual_var(3.0, TruncationSide::Positive) == 1.0 - 3.0 * inverse_mills(3.0));
  CHECK_THAT(trunc_norm_residual_var(-2.0, TruncationSide::Positive), WithinAbs(kResidualMinus2, 1e-12));
  for (double m : {-50.0, -5.0, 0.5, 5.0, 50.0})
    for (auto side : {TruncationSide::Positive, TruncationSide::NonPositive})
      CHECK(trunc_norm_residual_var(m, side) > 0.0);
}

TEST_CASE("truncated moments agree with quadrature on [-8, 8]", "[stat_kernels]") {
  for (int k = 0; k < 41; ++k) {
    const double m = -8.0 + 0.4 * k;
    for (auto side : {TruncationSide::Positive, TruncationSide::NonPositive}) {
      const auto q = testing::quadrature_moments(m, side);
      const double zb = trunc_norm_mean(m, side);
      INFO("m = " << m << " side = " << static_cast<int>(side));
      CHECK_THAT(zb, WithinAbs(q.mean, 1e-8));
      CHECK_THAT(trunc_norm_second_moment(m, zb), WithinAbs(q.second, 1e-8));
      CHECK_THAT(trunc_norm_residual_var(m, side), WithinAbs(q.residual, 1e-8));
    }
  }
}

TEST_CASE("sample_trunc_norm matches the truncated mean", "[stat_kernels][sampler]") {
  SECTION("m = 0, Positive, 1e6 draws") {
    Rng rng(11);
    const int N = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < N; ++i) {
      const double z = sample_trunc_norm(rng, 0.0, TruncationSide::Positive);
      REQUIRE(z > 0.0);
      sum += z;
      sq += z * z;
    }
    const double mean = sum / N;
    const double se = std::sqrt((sq / N - mean * mean) / N);
    CHECK_THAT(mean, WithinAbs(0.7979, 0.003));
    CHECK(std::abs(mean - trunc_norm_mean(0.0, TruncationSide::Positive)) < 4.0 * se);
  }
  SECTION("m = -8, Positive, 1e5 draws") {
    Rng rng(12);
    const int N = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < N; ++i) {
      const double z = sample_trunc_norm(rng, -8.0, TruncationSide::Positive);
      REQUIRE(z > 0.0);
      sum += z;
      sq += z * z;
    }
    const double mean = sum / N;
    const double se = std::sqrt((sq / N - mean * mean) / N);
    CHECK(std::abs(mean - trunc_norm_mean(-8.0, TruncationSide::Positive)) < 4.0 * se);
  }
  SECTION("both sides over a range of means, 1e5 draws each") {
    Rng rng(13);
    for (double m : {-30.0, -12.0, -5.5, -5.0, -4.9, -2.0, 0.7, 4.9, 5.0, 5.5, 12.0, 30.0})
      for (auto side : {TruncationSide::Positive, TruncationSide::NonPositive}) {
        const int N = 100000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < N; ++i) {
          const double z = sample_trunc_norm(rng, m, side);
          REQUIRE(std::isfinite(z));
          REQUIRE((side == TruncationSide::Positive ? z > 0.0 : z <= 0.0));
          sum += z;
          sq += z * z;
        }
        const double mean = sum / N;
        const double se = std::sqrt(std::max(sq / N - mean * mean, 0.0) / N);
        INFO("m = " << m << " side = " << static_cast<int>(side));
        CHECK(std::abs(mean - trunc_norm_mean(m, side)) < 4.0 * se);
      }
  }
}

TEST_CASE("sample_trunc_norm passes a Kolmogorov-Smirnov check", "[stat_kernels][sampler]") {
  // Critical value of the one-sample KS statistic at the 0.1% level.
  const int N = 1000000;
  const double critical = 1.9495 / std::sqrt(static_cast<double>(N));
  Rng rng(21);
  for (double m : {-6.0, -1.0, 0.0, 2.5, 7.0}) {
    for (auto side : {TruncationSide::Positive, TruncationSide::NonPositive}) {
      std::vector<double> draws(N);
      for (auto &z : draws)
        z = sample_trunc_norm(rng, m, side);
      std::sort(draws.begin(), draws.end());
      // CDF of the truncated law, evaluated through upper tails for stability.
      auto cdf = [&](double z) {
        if (side == TruncationSide::Positive)
          return 1.0 - upper_tail(z - m) / upper_tail(-m);
        return upper_tail(m - z) / upper_tail(m);
      };
      double d = 0.0;
      for (int i = 0; i < N; ++i) {
        const double f = cdf(draws[static_cast<std::size_t>(i)]);
        d = std::max({d, f - static_cast<double>(i) / N, static_cast<double>(i + 1) / N - f});
      }
      INFO("m = " << m << " side = " << static_cast<int>(side) << " D = " << d);
      CHECK(d < critical);
    }
  }
}

TEST_CASE("sample_trunc_norm is deterministic for a fixed seed", "[stat_kernels][sampler]") {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    const double m = -10.0 + 0.02 * i;
    const auto side = i % 2 ? TruncationSide::Positive : TruncationSide::NonPositive;
    REQUIRE(sample_trunc_norm(a, m, side) == sample_trunc_norm(b, m, side));
  }
  CHECK_THROWS_AS(sample_trunc_norm(a, kInf, TruncationSide::Positive), std::domain_error);
}

TEST_CASE("expit and logit", "[stat_kernels]") {
  CHECK(expit(0.0) == 0.5);
  CHECK(logit(0.5) == 0.0);
  CHECK_THAT(expit(logit(0.2)), WithinAbs(0.2, 1e-14));
  CHECK_THAT(expit(40.0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(expit(-40.0), WithinAbs(0.0, 1e-17));
  CHECK(expit(-40.0) > 0.0);
  CHECK(expit(-800.0) == 0.0);
  CHECK(expit(800.0) == 1.0);
  for (double p : {1e-10, 0.01, 0.3, 0.7, 0.99})
    CHECK_THAT(expit(logit(p)), WithinRel(p, 1e-12));
  for (double x : {-10.0, -2.0, 0.3, 5.0, 10.0})
    CHECK_THAT(logit(expit(x)), WithinAbs(x, 1e-10));
  CHECK_THROWS_AS(logit(0.0), std::domain_error);
  CHECK_THROWS_AS(logit(1.0), std::domain_error);
}

TEST_CASE("Rng streams", "[stat_kernels][rng]") {
  Rng a(5), b(5), c(6);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(u == b.uniform());
    differs = differs || u != c.uniform();
  }
  CHECK(differs);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
  Rng r(8);
  for (int i = 0; i < 1000; ++i)
    REQUIRE(r.index(7) < 7u);
}
