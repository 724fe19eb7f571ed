#pragma once

#include <stdexcept>
#include <string>

namespace vrgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not line up: partitions with gaps, views of the wrong length.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameters or experiment settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A step or gradient evaluation produced NaN/Inf.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string layer = {})
      : Error(layer.empty() ? what : what + " (layer '" + layer + "')"),
        layer_(std::move(layer)) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

/// An index or step outside the valid domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

}  // namespace vrgd
