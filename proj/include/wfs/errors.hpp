#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wfs {

/// Root of every error the engine raises. Callers that only care about
/// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: out-of-range values, empty required text, schema violations.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Operation not allowed in the current state (e.g. overwriting a reward,
/// approving a session that is mid-revision).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted file could not be decoded. Carries the byte offset where
/// decoding stopped.
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// ---- LLM gateway ------------------------------------------------------------

class GatewayError : public Error {
 public:
  using Error::Error;
};

/// Transient transport failure; the gateway retries these.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class BudgetError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Structured response failed to parse or validate, even after the re-ask.
class FormatError : public GatewayError {
 public:
  FormatError(const std::string& what, std::vector<std::string> raw)
      : GatewayError(what), raw_(std::move(raw)) {}
  const std::vector<std::string>& raw_payloads() const noexcept { return raw_; }

 private:
  std::vector<std::string> raw_;
};

/// The scripted provider had no matcher for a prompt.
class ScriptedMissError : public GatewayError {
 public:
  explicit ScriptedMissError(const std::string& digest)
      : GatewayError("scripted-miss: no matcher for prompt digest " + digest), digest_(digest) {}
  const std::string& digest() const noexcept { return digest_; }

 private:
  std::string digest_;
};

// ---- executor ---------------------------------------------------------------

class ExecutionError : public Error {
 public:
  enum class Kind { NonZeroExit, Timeout, Overflow, Launch, Signal };

  ExecutionError(Kind kind, const std::string& what, std::string stderr_text)
      : Error(what), kind_(kind), stderr_(std::move(stderr_text)) {}
  Kind kind() const noexcept { return kind_; }
  const std::string& captured_stderr() const noexcept { return stderr_; }

 private:
  Kind kind_;
  std::string stderr_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class BatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// ---- search -----------------------------------------------------------------

/// Metric proposal / judging failed and the evaluation could not complete.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

class RefinementError : public Error {
 public:
  using Error::Error;
};

/// HITL session reached its revision cap.
class LimitError : public StateError {
 public:
  using StateError::StateError;
};

}  // namespace wfs
