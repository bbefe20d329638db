#pragma once

#include <stdexcept>
#include <string>

namespace gpig {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Scalar argument outside its admissible interval.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Feature/edge index out of bounds or duplicated.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Problem size beyond what an exhaustive routine accepts.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpig
