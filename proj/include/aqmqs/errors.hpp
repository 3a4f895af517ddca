#pragma once

#include <stdexcept>

namespace aqmqs {

/// A state or derivative became NaN/inf during evaluation or integration.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent scenario / configuration input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aqmqs
