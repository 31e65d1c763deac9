#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tailcast {

// Failure categories double as process exit codes for the CLI.
enum class ErrorCategory : int {
  Config = 2,
  Data = 3,
  Numeric = 4,
};

enum class ErrorKind {
  // ingest
  MissingColumn,
  MalformedRow,
  DuplicateDate,
  EmptyInput,
  GapTooLarge,
  // synth / config
  InvalidConfig,
  InvalidParams,
  // evt
  TooFewObservations,
  TooFewExceedances,
  NonFiniteLikelihood,
  OutOfSupport,
  DegenerateSeries,
  // dataset / graph
  MissingDescriptors,
  EmptyWindowSet,
  ZeroVarianceStation,
  // autodiff / model
  ShapeMismatch,
  EmptyMaskRow,
  NonScalarLoss,
  BackwardTwice,
  IsolatedNode,
  // training
  EmptyDataset,
  NonFiniteLoss,
  NonFiniteGradient,
  // metrics
  LengthMismatch,
  SingleClassInput,
  NoPositives,
  // io
  Io,
  BadCheckpoint,
  MissingMetric,
};

std::string_view to_string(ErrorKind kind) noexcept;
ErrorCategory category_of(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace tailcast
