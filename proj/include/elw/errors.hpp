#pragma once

#include <stdexcept>
#include <string>

namespace elw {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a structural requirement (empty sample, n > N, bad probabilities).
class InvalidSample : public Error {
 public:
  using Error::Error;
};

/// A function was evaluated outside its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An inverse-probability weight is undefined because an observed probability is zero.
class ZeroProbability : public Error {
 public:
  ZeroProbability(std::size_t unit, const std::string& what)
      : Error(what + " (unit " + std::to_string(unit) + ")"), unit_(unit) {}
  std::size_t unit() const noexcept { return unit_; }

 private:
  std::size_t unit_;
};

/// The likelihood or a variance formula degenerates (alpha = 1, B11 <= 1, singular matrix).
class Degenerate : public Error {
 public:
  using Error::Error;
};

/// Complete or quasi-complete separation in a logistic fit.
class Separation : public Error {
 public:
  using Error::Error;
};

}  // namespace elw
