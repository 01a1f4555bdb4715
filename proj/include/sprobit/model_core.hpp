#pragma once

// Observed data, hyperparameters, and the precomputed Gram matrix of the
// masked probit model
//   y_i = 1{z_i > 0},  z_i ~ N(x_i' diag(gamma) beta, 1),
//   beta ~ N(0, nu2 I),  gamma_j ~ Bernoulli(rho).

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sprobit/errors.hpp"

namespace sprobit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

struct Dataset {
  MatrixXd X;  // n x p, row i is x_i'
  VectorXi y;  // entries in {0, 1}
  std::vector<std::string> feature_names;  // empty or length p

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
};

struct Hyperparameters {
  double nu2 = 1.0;
  double rho = 0.5;
  double nu0_2 = 25.0;

  Hyperparameters() = default;
  Hyperparameters(double nu2_, double rho_, double nu0_2_ = 25.0)
      : nu2(nu2_), rho(rho_), nu0_2(nu0_2_) {
    validate();
  }

  void validate() const {
    if (!(nu2 > 0.0) || !std::isfinite(nu2))
      throw std::domain_error("hyperparameters: nu2 must be positive");
    if (!(rho > 0.0 && rho < 1.0))
      throw std::domain_error("hyperparameters: rho must lie in (0, 1)");
    if (!(nu0_2 > 0.0) || !std::isfinite(nu0_2))
      throw std::domain_error("hyperparameters: nu0_2 must be positive");
  }
};

/// G = X'X plus its diagonal. `zero_columns` lists all-zero columns of X;
/// these are legal but flagged.
struct GramCache {
  MatrixXd G;
  VectorXd col_sq_norms;
  std::vector<Index> zero_columns;

  bool has_zero_column_warning() const { return !zero_columns.empty(); }
};

/// Ground truth of a simulated dataset.
struct TruthParams {
  VectorXi gamma0;
  VectorXd beta0;

  VectorXd effective() const { return gamma0.cast<double>().cwiseProduct(beta0); }
};

/// Throws ValidationError naming offending entries; checks shape, finiteness,
/// binary response and feature-name uniqueness.
inline void validate_dataset(const Dataset &data) {
  if (data.n() < 1 || data.p() < 1)
    throw ValidationError("dataset: need at least one row and one column");
  if (data.y.size() != data.n())
    throw ValidationError("dataset: response length " + std::to_string(data.y.size()) +
                          " does not match " + std::to_string(data.n()) + " rows");

  std::vector<std::size_t> bad_rows;
  for (Index i = 0; i < data.n(); ++i) {
    bool ok = data.y(i) == 0 || data.y(i) == 1;
    for (Index j = 0; ok && j < data.p(); ++j)
      ok = std::isfinite(data.X(i, j));
    if (!ok)
      bad_rows.push_back(static_cast<std::size_t>(i));
  }
  if (!bad_rows.empty()) {
    std::string msg = "dataset: non-finite covariates or response outside {0,1} in rows";
    for (std::size_t k = 0; k < bad_rows.size() && k < 20; ++k)
      msg += " " + std::to_string(bad_rows[k]);
    if (bad_rows.size() > 20)
      msg += " ...";
    throw ValidationError(msg, std::move(bad_rows));
  }

  if (!data.feature_names.empty()) {
    if (static_cast<Index>(data.feature_names.size()) != data.p())
      throw ValidationError("dataset: feature_names length does not match column count");
    std::set<std::string> seen;
    std::vector<std::size_t> dup;
    for (std::size_t j = 0; j < data.feature_names.size(); ++j)
      if (!seen.insert(data.feature_names[j]).second)
        dup.push_back(j);
    if (!dup.empty()) {
      const std::string msg = "dataset: duplicate feature name '" + data.feature_names[dup[0]] + "'";
      throw ValidationError(msg, std::move(dup));
    }
  }
}

inline GramCache validate_and_cache(const Dataset &data) {
  validate_dataset(data);
  GramCache cache;
  cache.G = MatrixXd::Zero(data.p(), data.p());
  cache.G.selfadjointView<Eigen::Lower>().rankUpdate(data.X.transpose());
  cache.G.triangularView<Eigen::StrictlyUpper>() = cache.G.transpose();
  cache.col_sq_norms = cache.G.diagonal();
  for (Index j = 0; j < data.p(); ++j)
    if (data.X.col(j).isZero(0.0))
      cache.zero_columns.push_back(j);
  return cache;
}

/// Slab variance that keeps the prior variance of the linear predictor near
/// nu0_2 for unit-variance covariates: nu0_2 / (rho * p).
inline double derive_nu2(double rho, Index p, double nu0_2) {
  if (!(rho > 0.0) || p < 1 || !(nu0_2 > 0.0))
    throw std::domain_error("derive_nu2: inputs must be positive");
  return nu0_2 / (rho * static_cast<double>(p));
}

inline std::string feature_name(const Dataset &data, Index j) {
  if (!data.feature_names.empty())
    return data.feature_names[static_cast<std::size_t>(j)];
  return "x" + std::to_string(j + 1);
}

/// Rows of `data` selected by `rows`, in the given order.
inline Dataset subset_rows(const Dataset &data, const std::vector<Index> &rows) {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), data.p());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.X.row(static_cast<Index>(r)) = data.X.row(rows[r]);
    out.y(static_cast<Index>(r)) = data.y(rows[r]);
  }
  out.feature_names = data.feature_names;
  return out;
}

} // namespace sprobit
