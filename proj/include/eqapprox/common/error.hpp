#pragma once

#include <stdexcept>
#include <string>

namespace eqapprox {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not compose (input length, matrix sizes, layer chaining).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Arguments outside the range a builder or evaluator supports.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// A construction could not be completed (table limits, failed spot checks).
class BuildError : public Error {
 public:
  using Error::Error;
};

}  // namespace eqapprox
