#pragma once

#include <stdexcept>
#include <string>

namespace srop {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or array shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (resolutions, families, model specs, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An operation was requested in a state that forbids it.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training or solving.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace srop
