#pragma once

#include <stdexcept>
#include <string>

namespace narrmem {

// Root of every error the library throws. `code()` is a stable machine-readable
// tag used by the HTTP layer and the CLI exit-code mapping.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define NARRMEM_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(tag, message) {}   \
  };

NARRMEM_DEFINE_ERROR(ConfigError, "config_error")
NARRMEM_DEFINE_ERROR(InvalidArgument, "invalid_argument")
NARRMEM_DEFINE_ERROR(DomainError, "domain_error")
NARRMEM_DEFINE_ERROR(DataError, "data_error")
NARRMEM_DEFINE_ERROR(NotFoundError, "not_found")
NARRMEM_DEFINE_ERROR(StateError, "state_error")
NARRMEM_DEFINE_ERROR(SequenceError, "sequence_error")
NARRMEM_DEFINE_ERROR(ConflictError, "conflict")
NARRMEM_DEFINE_ERROR(TransportError, "transport_error")
NARRMEM_DEFINE_ERROR(ContentError, "content_error")
NARRMEM_DEFINE_ERROR(InputError, "input_error")
NARRMEM_DEFINE_ERROR(InsufficientLuresError, "insufficient_lures")
NARRMEM_DEFINE_ERROR(UndefinedCorrelationError, "undefined_correlation")
NARRMEM_DEFINE_ERROR(FitError, "fit_error")
NARRMEM_DEFINE_ERROR(InsufficientDataError, "insufficient_data")

#undef NARRMEM_DEFINE_ERROR

// Raised by completion parsers; keeps the raw completion for audit.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw_text)
      : Error("parse_error", message), raw_text_(std::move(raw_text)) {}
  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  std::string raw_text_;
};

// Provider-side failure that may succeed on retry (rate limit, 5xx, socket).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message)
      : Error("transient", message) {}
};

}  // namespace narrmem
