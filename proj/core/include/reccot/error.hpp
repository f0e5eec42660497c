#pragma once

#include <stdexcept>
#include <string>

namespace reccot {

// Base of every error thrown by the library. Callers that only need to report
// a failure catch this; the derived kinds exist for tests and the CLI's exit
// codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace reccot
