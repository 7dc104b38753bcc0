#pragma once

#include <stdexcept>
#include <string>

namespace aleph {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

// Invalid tree mutation: duplicate action, expansion of a terminal node,
// nonpositive reward, or an operation that needs a backpropagated tree.
class TreeError : public Error {
 public:
  using Error::Error;
};

class EmptyError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Checkpoint magic/architecture mismatch or a truncated file.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace aleph
