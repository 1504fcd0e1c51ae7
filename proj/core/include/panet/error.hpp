#pragma once

#include <stdexcept>
#include <string>

namespace panet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor shape with a non-positive dimension was requested.
class InvalidShape : public Error {
 public:
  using Error::Error;
};

/// A scalar or configuration argument is out of its valid domain.
class InvalidParam : public Error {
 public:
  using Error::Error;
};

/// Operand shapes are inconsistent with each other or with an op's contract.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity surfaced in an op output.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class GradCheckFailure : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

/// File-system, codec or dataset problems.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string last_checkpoint)
      : Error(what), last_checkpoint_(std::move(last_checkpoint)) {}

  const std::string& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

}  // namespace panet
