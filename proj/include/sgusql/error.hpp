#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgusql {

// Every failure surfaced by the library derives from Error. The CLI maps the
// category onto its exit code contract.
enum class ErrorCategory { io, validation, pipeline };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorCategory::validation, what) {}
};

// Malformed document; offset is the byte position reported by the reader.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ValidationError(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptySchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what)
      : Error(ErrorCategory::pipeline, what) {}
};

class AssemblyError : public Error {
 public:
  explicit AssemblyError(const std::string& what)
      : Error(ErrorCategory::pipeline, what) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what)
      : Error(ErrorCategory::pipeline, what) {}
};

}  // namespace sgusql
