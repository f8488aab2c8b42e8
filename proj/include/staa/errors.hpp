#pragma once

#include <stdexcept>
#include <string>

namespace staa {

// Base class for every error thrown by the library. The CLI maps the
// concrete kinds onto its exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class EmptyInputError : public Error {
public:
  using Error::Error;
};

class NumericError : public Error {
public:
  using Error::Error;
};

class RangeError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Invalid scene or configuration values.
class SpecError : public Error {
public:
  using Error::Error;
};

}  // namespace staa
