#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medsens {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside a function's mathematical domain (non-finite, p outside (0,1), ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition: dimension or coefficient-layout mismatch.
class ContractError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  using Error::Error;
};

class SeparationError : public Error {
 public:
  using Error::Error;
};

// Raised when an effect is requested from a fit that did not converge.
class NotConvergedError : public Error {
 public:
  using Error::Error;
};

class ScanError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// A function probed by finite differences returned a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t component)
      : Error(what), component_(component) {}
  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t component_;
};

}  // namespace medsens
