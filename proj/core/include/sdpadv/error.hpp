#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sdpadv/config.hpp"

SDPADV_NAMESPACE_BEGIN

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not conform to an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input; carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Checkpoint contents that do not match the requested architecture.
class LoadError : public Error {
 public:
  using Error::Error;
};

SDPADV_NAMESPACE_END
