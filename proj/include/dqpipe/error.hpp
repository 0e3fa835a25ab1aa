#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dqpipe {

enum class Errc {
  EmptyCycle,
  NonMonotoneTimestamps,
  WindowSizeMismatch,
  MalformedRecord,
  AllMissingWindow,
  InsufficientSample,
  EmptySample,
  BinMismatch,
  DegenerateCorpus,
  InsufficientData,
  InsufficientBaseline,
  EmptyTrainingSet,
  NonFiniteInput,
  DimensionMismatch,
  LengthMismatch,
  ZeroVariance,
  StorageFailure,
  NotFound,
  WriterLocked,
  InvalidConfig,
  SchemaMismatch,
};

std::string_view errc_name(Errc code) noexcept;

/// Every recoverable failure in the library is reported as an Error with a
/// machine-checkable code; what() carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// MalformedRecord carries the offending 1-based line number.
class MalformedRecordError : public Error {
 public:
  MalformedRecordError(std::size_t line, const std::string& detail)
      : Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + detail),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dqpipe
