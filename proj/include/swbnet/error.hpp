#pragma once

#include <stdexcept>
#include <string>

namespace swbnet {

// Base of every error raised by the library. The CLI maps the subclasses
// onto exit codes (see tools/swbnet.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Phase-order violations, missing decisions, replay mismatches.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Inputs on which a statistic is mathematically undefined.
class UndefinedInput : public Error {
 public:
  using Error::Error;
};

// Logistic fit that does not converge (perfect separation).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace swbnet
