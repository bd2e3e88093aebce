#pragma once

#include <stdexcept>
#include <string>

namespace textlrp {

// Runtime failure while processing data (bad file, numerical problem, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied an invalid configuration or argument.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace textlrp
