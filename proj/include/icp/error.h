#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace icp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input, configuration or arguments. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Environment or dependency failures. The CLI maps these to exit code 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

#define ICP_DEFINE_ERROR(Name, Base) \
  class Name : public Base {         \
   public:                           \
    using Base::Base;                \
  };

ICP_DEFINE_ERROR(IoError, RuntimeFailure)
ICP_DEFINE_ERROR(EmptyCorpus, ValidationError)
ICP_DEFINE_ERROR(AnchorOutOfRange, ValidationError)
ICP_DEFINE_ERROR(NoContext, ValidationError)
ICP_DEFINE_ERROR(UnsupportedLanguage, ValidationError)
ICP_DEFINE_ERROR(MissingAnnotation, RuntimeFailure)
ICP_DEFINE_ERROR(UnknownWord, ValidationError)
ICP_DEFINE_ERROR(ConfigError, ValidationError)
ICP_DEFINE_ERROR(DuplicateId, ValidationError)
ICP_DEFINE_ERROR(UnknownTemplate, ValidationError)
ICP_DEFINE_ERROR(StageMismatch, ValidationError)
ICP_DEFINE_ERROR(EmptySlot, ValidationError)
ICP_DEFINE_ERROR(BackendUnavailable, RuntimeFailure)
ICP_DEFINE_ERROR(AuthMissing, RuntimeFailure)
ICP_DEFINE_ERROR(CacheCorrupt, RuntimeFailure)
ICP_DEFINE_ERROR(LengthMismatch, ValidationError)
ICP_DEFINE_ERROR(EmptyInput, ValidationError)
ICP_DEFINE_ERROR(AlignmentError, ValidationError)
ICP_DEFINE_ERROR(UnknownChain, ValidationError)
ICP_DEFINE_ERROR(UnknownErrorType, ValidationError)
ICP_DEFINE_ERROR(AnswerTimeout, RuntimeFailure)
ICP_DEFINE_ERROR(SessionNotFound, ValidationError)

#undef ICP_DEFINE_ERROR

// A session exists but is not in a state that accepts the request.
// code() is "already_answered", "session_expired" or "session_failed".
class SessionConflict : public ValidationError {
 public:
  SessionConflict(std::string code, const std::string& message)
      : ValidationError(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class FormatError : public ValidationError {
 public:
  FormatError(std::size_t line, const std::string& reason)
      : ValidationError("line " + std::to_string(line) + ": " + reason),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TemplateParseError : public ValidationError {
 public:
  TemplateParseError(const std::string& file, const std::string& reason)
      : ValidationError(file + ": " + reason), file_(file) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

class ScorerFailure : public RuntimeFailure {
 public:
  ScorerFailure(std::size_t index, const std::string& reason)
      : RuntimeFailure("scorer failed on phrase " + std::to_string(index) +
                       ": " + reason),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace icp
