#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace autoprune {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidScenario : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected; `layer` is the offending parameter layer when known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::ptrdiff_t layer = -1)
      : Error(what), layer_(layer) {}
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

/// The flops budget cannot be met; `layer` is the first layer where it breaks.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::size_t layer) : Error(what), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class TransferError : public Error {
 public:
  using Error::Error;
};

class AugmentationInfeasible : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class AssistantUnavailable : public Error {
 public:
  using Error::Error;
};

class LibraryError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace autoprune
