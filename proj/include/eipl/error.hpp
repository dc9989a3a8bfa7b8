#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eipl {

enum class ErrorKind {
  // corpus
  MissingField,
  BadLineIndex,
  NoFewShot,
  BadFewShot,
  BadId,
  BadLabel,
  DuplicateResponseId,
  Io,
  // prompting
  EmptyResponse,
  // backend
  Transport,
  RateLimited,
  SchemaRefused,
  Exhausted,
  BackendRejected,
  MockMiss,
  Config,
  // segmentation
  MalformedJson,
  SchemaViolation,
  // pipeline / evaluation
  BadThreshold,
  EmptyAfterFilter,
  EmptyMatrix,
  MissingLabel,
  UnknownQuestion,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::BadLineIndex: return "BadLineIndex";
    case ErrorKind::NoFewShot: return "NoFewShot";
    case ErrorKind::BadFewShot: return "BadFewShot";
    case ErrorKind::BadId: return "BadId";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::DuplicateResponseId: return "DuplicateResponseId";
    case ErrorKind::Io: return "Io";
    case ErrorKind::EmptyResponse: return "EmptyResponse";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::SchemaRefused: return "SchemaRefused";
    case ErrorKind::Exhausted: return "Exhausted";
    case ErrorKind::BackendRejected: return "BackendRejected";
    case ErrorKind::MockMiss: return "MockMiss";
    case ErrorKind::Config: return "Config";
    case ErrorKind::MalformedJson: return "MalformedJson";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::BadThreshold: return "BadThreshold";
    case ErrorKind::EmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::MissingLabel: return "MissingLabel";
    case ErrorKind::UnknownQuestion: return "UnknownQuestion";
  }
  return "Unknown";
}

/// Errors raised by the backend layer. Everything else is input or parse trouble.
inline bool is_backend_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Transport:
    case ErrorKind::RateLimited:
    case ErrorKind::SchemaRefused:
    case ErrorKind::Exhausted:
    case ErrorKind::BackendRejected:
    case ErrorKind::MockMiss:
      return true;
    default:
      return false;
  }
}

/// Single exception type for the library. `where` names the offending
/// field, file, JSON path, or response id; it may be empty.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string where, const std::string& message)
      : std::runtime_error(compose(kind, where, message)),
        kind_(kind),
        where_(std::move(where)),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string compose(ErrorKind kind, const std::string& where,
                             const std::string& message) {
    std::string out(to_string(kind));
    if (!where.empty()) out += " at " + where;
    if (!message.empty()) out += ": " + message;
    return out;
  }

  ErrorKind kind_;
  std::string where_;
  std::string detail_;
};

}  // namespace eipl
