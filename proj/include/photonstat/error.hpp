#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace photonstat {

enum class ErrorCode {
  // stream-core
  MalformedHeader,
  OutOfOrderRecord,
  TruncatedFile,
  InvalidRecord,
  IoFailure,
  ParseError,
  InvalidWindow,
  // emitter-sim
  InvalidModel,
  // correlator
  EmptyChannel,
  SpanTooLarge,
  TooLarge,
  NoPlateau,
  DurationTooShort,
  // fitting / trace analysis
  FitDiverged,
  InsufficientRange,
  InsufficientCounts,
  InsufficientPoints,
  NoPeak,
  Unimodal,
  EmptySelection,
  // flid
  TooFewSamples,
  MismatchedTraces,
  // generic precondition failure
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Typed failure raised by every library operation.
//
// `index` carries the offending record index (OutOfOrderRecord, InvalidRecord)
// and `line` the 1-based input line (ParseError) when they apply.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
  std::optional<std::size_t> line_;
};

}  // namespace photonstat
