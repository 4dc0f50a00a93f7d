#pragma once

#include <stdexcept>
#include <string>

namespace cvalue {

/// Argument outside the mathematical domain of an operation (probability of 0 or 1,
/// non-positive scale, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Inputs whose shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Parameters outside the supported numerical envelope.
class RangeError : public std::out_of_range {
 public:
  explicit RangeError(const std::string& what) : std::out_of_range(what) {}
};

/// Iterative method failed, matrix not factorizable, separation in logistic data, ...
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cvalue
