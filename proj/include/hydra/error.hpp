#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hydra {

// Every failure the library reports carries one of these codes so callers
// (CLI exit codes, HTTP status mapping, tests) can branch without parsing
// message text.
enum class ErrorCode {
  // signal-core
  MalformedHeader,
  NonNumericSample,
  EmptyBody,
  EmptySeries,
  OutOfRange,
  InvalidAnnotation,
  InvalidArgument,
  // preprocess
  CutoffAboveNyquist,
  UnsupportedOrder,
  WidthTooLarge,
  SpanCoversWholeSeries,
  // decompose
  InvalidTaus,
  RateMismatch,
  ZeroLeadingTap,
  SignalTooShort,
  BoundsViolation,
  // features
  SeriesTooShort,
  WindowOutOfRange,
  TooFewSubWindows,
  NoLabeledWindows,
  MalformedDataset,
  // learn
  EmptyDataset,
  FeatureOrderMismatch,
  NonFiniteFeature,
  TooFewRows,
  VersionMismatch,
  CorruptModel,
  // stream
  TimestampRegression,
  // service
  NotFound,
  Conflict,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace hydra
