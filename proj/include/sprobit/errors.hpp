#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sprobit {

/// Input data failed validation. Carries the offending row/column indices.
class ValidationError : public std::runtime_error {
public:
  ValidationError(const std::string &what, std::vector<std::size_t> indices = {})
      : std::runtime_error(what), indices_(std::move(indices)) {}

  const std::vector<std::size_t> &indices() const noexcept { return indices_; }

private:
  std::vector<std::size_t> indices_;
};

/// A factorization that should succeed did not. `pivot` is the failing index.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string &what, std::ptrdiff_t pivot = -1)
      : std::runtime_error(what), pivot_(pivot) {}

  std::ptrdiff_t pivot() const noexcept { return pivot_; }

private:
  std::ptrdiff_t pivot_;
};

} // namespace sprobit
