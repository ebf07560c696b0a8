#pragma once

#include <stdexcept>
#include <string>

namespace docent {

/// Raised when a computation produces a non-finite value it cannot recover from.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, corpora, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace docent
