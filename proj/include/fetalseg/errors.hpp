#pragma once

#include <stdexcept>
#include <string>

namespace fseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value violates a type invariant (label code out of range, bad spacing, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image geometry mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimisation.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// The ICV stage produced an empty mask after filtering.
class NoIcvError : public Error {
 public:
  NoIcvError() : Error("no ICV found") {}
  using Error::Error;
};

}  // namespace fseg
