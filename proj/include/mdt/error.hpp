#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mdt {

/// Every failure the library reports carries one of these kinds. The CLI maps
/// them onto exit codes and the session service onto HTTP statuses.
enum class ErrorKind {
  // dataset
  SyntaxError,
  DuplicateAttribute,
  EmptyValueSet,
  FewerThanTwoClasses,
  ArityMismatch,
  UnknownDiscreteValue,
  UnknownLabel,
  NumericParseError,
  BadCount,
  // induction / pruning / ensemble / evaluation
  InapplicableTest,
  EmptyTrainingSet,
  ScriptedChoiceInvalid,
  EmptyHoldout,
  SchemaMismatch,
  BadK,
  EmptyTestSet,
  NotAProbabilityVector,
  BadCounts,
  // bayes oracle
  LengthMismatch,
  ZeroNormalizer,
  BadIndex,
  // session service
  NoSuchSession,
  TreeComplete,
  InvalidChoice,
  EmptyShelf,
  DataError,
  // serialization of trees, manifests, count tables
  FormatError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::DuplicateAttribute: return "DuplicateAttribute";
    case ErrorKind::EmptyValueSet: return "EmptyValueSet";
    case ErrorKind::FewerThanTwoClasses: return "FewerThanTwoClasses";
    case ErrorKind::ArityMismatch: return "ArityMismatch";
    case ErrorKind::UnknownDiscreteValue: return "UnknownDiscreteValue";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::NumericParseError: return "NumericParseError";
    case ErrorKind::BadCount: return "BadCount";
    case ErrorKind::InapplicableTest: return "InapplicableTest";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::ScriptedChoiceInvalid: return "ScriptedChoiceInvalid";
    case ErrorKind::EmptyHoldout: return "EmptyHoldout";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::NotAProbabilityVector: return "NotAProbabilityVector";
    case ErrorKind::BadCounts: return "BadCounts";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ZeroNormalizer: return "ZeroNormalizer";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::NoSuchSession: return "NoSuchSession";
    case ErrorKind::TreeComplete: return "TreeComplete";
    case ErrorKind::InvalidChoice: return "InvalidChoice";
    case ErrorKind::EmptyShelf: return "EmptyShelf";
    case ErrorKind::DataError: return "DataError";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  /// Row and column are 1-based; zero means "not applicable".
  Error(ErrorKind kind, const std::string& message, std::size_t row,
        std::size_t column = 0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message +
                           location(row, column)),
        kind_(kind),
        message_(message),
        row_(row),
        column_(column) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without kind prefix or location suffix.
  const std::string& message() const noexcept { return message_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string location(std::size_t row, std::size_t column) {
    std::string out;
    if (row != 0) out += " (line " + std::to_string(row);
    if (column != 0) out += ", column " + std::to_string(column);
    if (row != 0) out += ")";
    return out;
  }

  ErrorKind kind_;
  std::string message_;
  std::size_t row_ = 0;
  std::size_t column_ = 0;
};

}  // namespace mdt
