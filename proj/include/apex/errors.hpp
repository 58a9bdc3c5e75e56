#pragma once

#include <stdexcept>
#include <string>

namespace apex {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (bad cutoffs, bad parameter combinations).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed data handed to an operation (empty signals, NaNs, shape mismatch).
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error(msg) {}
};

// A window or trial does not carry enough signal to produce features.
class InsufficientSignalError : public Error {
 public:
  explicit InsufficientSignalError(const std::string& msg) : Error(msg) {}
};

// Feature selection could not produce a usable mask.
class SelectionError : public Error {
 public:
  explicit SelectionError(const std::string& msg) : Error(msg) {}
};

// Model fitting failed (empty training data and similar).
class FitError : public Error {
 public:
  explicit FitError(const std::string& msg) : Error(msg) {}
};

// Evaluation-protocol violation (test subject present among members, ...).
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

// Dataset directory or file failed validation; message names the offender.
class IngestError : public Error {
 public:
  explicit IngestError(const std::string& msg) : Error(msg) {}
};

}  // namespace apex
