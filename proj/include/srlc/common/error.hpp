#pragma once

#include <stdexcept>
#include <string>

namespace srlc {

// Invalid configuration, shape mismatch, or bad user input. Maps to CLI exit
// code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN/Inf showed up where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training had to stop (non-finite loss etc). Maps to CLI exit code 3.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srlc
