#pragma once

#include <stdexcept>
#include <string>

namespace lost {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is out of its documented range (rank, index, k, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A combination of settings that cannot describe a valid layer or model.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong state (e.g. backward without a cache).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed external input: tokens, files, checkpoints.
class InputError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Raised by the optimizer when a gradient holds NaN/Inf. Carries the tensor name.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string tensor, const std::string& what)
      : Error(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

}  // namespace lost
