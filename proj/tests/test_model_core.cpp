#include <cmath>
#include <limits>

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace sprobit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Dataset make(const MatrixXd &X, const VectorXi &y) {
  Dataset d;
  d.X = X;
  d.y = y;
  return d;
}

} // namespace

TEST_CASE("validate_and_cache examples", "[model_core]") {
  SECTION("identity design") {
    const auto g = validate_and_cache(make(MatrixXd::Identity(2, 2), (VectorXi(2) << 0, 1).finished()));
    CHECK(g.G == MatrixXd::Identity(2, 2));
    CHECK(g.col_sq_norms == VectorXd::Ones(2));
    CHECK_FALSE(g.has_zero_column_warning());
  }
  SECTION("zero column is flagged, not rejected") {
    MatrixXd X(3, 2);
    X << 1, 0, 2, 0, -1, 0;
    const auto g = validate_and_cache(make(X, (VectorXi(3) << 0, 1, 1).finished()));
    REQUIRE(g.has_zero_column_warning());
    CHECK(g.zero_columns == std::vector<Index>{1});
    CHECK(g.G.row(1).isZero(0.0));
    CHECK(g.G.col(1).isZero(0.0));
    CHECK(g.G(0, 0) == 6.0);
  }
  SECTION("random 5x3 matches the triple loop") {
    Rng rng(3);
    const Dataset d = testing::random_probit_data(rng, 5, 3);
    const auto g = validate_and_cache(d);
    const MatrixXd ref = testing::naive_gram(d.X);
    CHECK((g.G - ref).cwiseAbs().maxCoeff() <= 1e-12 * ref.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("GramCache matches the naive product up to n=200, p=50", "[model_core]") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 1 + static_cast<Index>(rng.index(200));
    const Index p = 1 + static_cast<Index>(rng.index(50));
    const Dataset d = testing::random_probit_data(rng, n, p);
    const auto g = validate_and_cache(d);
    const MatrixXd ref = testing::naive_gram(d.X);
    const double scale = ref.cwiseAbs().maxCoeff();
    REQUIRE((g.G - ref).cwiseAbs().maxCoeff() <= 1e-12 * scale);
    // Exact symmetry, nonnegative diagonal, numerically PSD.
    REQUIRE(g.G == g.G.transpose());
    REQUIRE((g.col_sq_norms.array() >= 0.0).all());
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g.G, Eigen::EigenvaluesOnly);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-9 * g.G.norm());
  }
}

TEST_CASE("validate_and_cache is idempotent", "[model_core]") {
  Rng rng(4);
  const Dataset d = testing::random_probit_data(rng, 30, 6);
  const auto a = validate_and_cache(d);
  const auto b = validate_and_cache(d);
  CHECK(a.G == b.G);
  CHECK(a.col_sq_norms == b.col_sq_norms);
  CHECK(a.zero_columns == b.zero_columns);
}

TEST_CASE("validation errors name the offending entries", "[model_core]") {
  MatrixXd X = MatrixXd::Ones(4, 2);
  VectorXi y = (VectorXi(4) << 0, 1, 0, 1).finished();

  SECTION("non-finite entries") {
    X(2, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
      validate_and_cache(make(X, y));
      FAIL("expected ValidationError");
    } catch (const ValidationError &e) {
      CHECK(e.indices() == std::vector<std::size_t>{2});
    }
    X(2, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_and_cache(make(X, y)), ValidationError);
  }
  SECTION("response outside {0,1}") {
    y(3) = 2;
    try {
      validate_and_cache(make(X, y));
      FAIL("expected ValidationError");
    } catch (const ValidationError &e) {
      CHECK(e.indices() == std::vector<std::size_t>{3});
    }
  }
  SECTION("dimension mismatch") {
    CHECK_THROWS_AS(validate_and_cache(make(X, VectorXi::Zero(3))), ValidationError);
    CHECK_THROWS_AS(validate_and_cache(make(MatrixXd(0, 2), VectorXi(0))), ValidationError);
    CHECK_THROWS_AS(validate_and_cache(make(MatrixXd(3, 0), VectorXi::Zero(3))), ValidationError);
  }
  SECTION("feature names") {
    Dataset d = make(X, y);
    d.feature_names = {"a", "a"};
    CHECK_THROWS_AS(validate_and_cache(d), ValidationError);
    d.feature_names = {"a"};
    CHECK_THROWS_AS(validate_and_cache(d), ValidationError);
    d.feature_names = {"a", "b"};
    CHECK_NOTHROW(validate_and_cache(d));
  }
}

TEST_CASE("derive_nu2 examples", "[model_core]") {
  CHECK(derive_nu2(0.5, 2, 25.0) == 25.0);
  CHECK_THAT(derive_nu2(0.05, 1000, 25.0), WithinRel(0.5, 1e-15));
  CHECK_THAT(derive_nu2(0.25, 200, 25.0), WithinRel(0.5, 1e-15));
  CHECK_THROWS_AS(derive_nu2(0.0, 10, 25.0), std::domain_error);
  CHECK_THROWS_AS(derive_nu2(0.5, 0, 25.0), std::domain_error);
  CHECK_THROWS_AS(derive_nu2(0.5, 10, -1.0), std::domain_error);
}

TEST_CASE("Hyperparameters invariants", "[model_core]") {
  CHECK_NOTHROW(Hyperparameters(1.0, 0.3));
  CHECK(Hyperparameters(1.0, 0.3).nu0_2 == 25.0);
  CHECK_THROWS_AS(Hyperparameters(0.0, 0.3), std::domain_error);
  CHECK_THROWS_AS(Hyperparameters(1.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(Hyperparameters(1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(Hyperparameters(1.0, 0.5, 0.0), std::domain_error);
}

TEST_CASE("TruthParams effective coefficients vanish off the mask", "[model_core]") {
  TruthParams t;
  t.gamma0 = (VectorXi(3) << 1, 0, 1).finished();
  t.beta0 = (VectorXd(3) << 2.0, 5.0, -1.0).finished();
  CHECK(t.effective() == (VectorXd(3) << 2.0, 0.0, -1.0).finished());
}

TEST_CASE("feature_name and subset_rows", "[model_core]") {
  Rng rng(1);
  Dataset d = testing::random_probit_data(rng, 6, 2);
  CHECK(feature_name(d, 1) == "x2");
  d.feature_names = {"u", "v"};
  CHECK(feature_name(d, 0) == "u");
  const Dataset s = subset_rows(d, {4, 1});
  REQUIRE(s.n() == 2);
  CHECK(s.X.row(0) == d.X.row(4));
  CHECK(s.y(1) == d.y(1));
  CHECK(s.feature_names == d.feature_names);
}
