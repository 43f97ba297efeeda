#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace isa {

// Root of every error the toolkit throws. The CLI maps the two families
// below onto exit codes (data -> 2, scorer -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ScorerError : public Error {
 public:
  using Error::Error;
};

// --- annotation / file-format errors -------------------------------------

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class OverlapError : public DataError {
 public:
  using DataError::DataError;
};

class OutOfRangeError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownUttError : public DataError {
 public:
  using DataError::DataError;
};

// --- audio errors ---------------------------------------------------------

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedFormatError : public DataError {
 public:
  using DataError::DataError;
};

class RangeError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyBufferError : public DataError {
 public:
  using DataError::DataError;
};

// --- synthesis errors -----------------------------------------------------

class InfeasibleError : public DataError {
 public:
  using DataError::DataError;
};

class AllSilentError : public DataError {
 public:
  using DataError::DataError;
};

class SilentSegmentError : public DataError {
 public:
  using DataError::DataError;
};

// --- scorer errors --------------------------------------------------------

class ScorerUnavailableError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class ProtocolError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class TimeoutError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class MissingScoreError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

}  // namespace isa
