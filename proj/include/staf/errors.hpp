#pragma once

#include <stdexcept>
#include <string>

namespace staf {

/// Base class for all engine errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- input / schema errors ---

class MalformedInput : public Error {
 public:
  using Error::Error;
};

class SchemaViolation : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// --- provider errors ---

class ProviderError : public Error {
 public:
  using Error::Error;
};

// Retryable transport-level failures.
class Timeout : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class RateLimited : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// Scripted provider has no recorded reply for a request; usually means a
// prompt drifted away from the transcript it was recorded against.
class ScriptMiss : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

// Structured output stayed invalid after the single repair round.
class OutputParseError : public Error {
 public:
  explicit OutputParseError(const std::string& what, std::string first_reply = "",
                            std::string second_reply = "")
      : Error(what),
        first_reply_(std::move(first_reply)),
        second_reply_(std::move(second_reply)) {}

  const std::string& first_reply() const { return first_reply_; }
  const std::string& second_reply() const { return second_reply_; }

 private:
  std::string first_reply_;
  std::string second_reply_;
};

// --- Mealy / DOT errors ---

class DotSyntaxError : public Error {
 public:
  using Error::Error;
};

class MissingLabelError : public Error {
 public:
  using Error::Error;
};

class NondeterminismError : public Error {
 public:
  NondeterminismError(std::string state, std::string input)
      : Error("nondeterministic machine: two transitions from state \"" + state +
              "\" on input \"" + input + "\""),
        state_(std::move(state)),
        input_(std::move(input)) {}

  const std::string& state() const { return state_; }
  const std::string& input() const { return input_; }

 private:
  std::string state_;
  std::string input_;
};

class UnknownState : public Error {
 public:
  using Error::Error;
};

// --- LTL errors ---

class LtlSyntaxError : public Error {
 public:
  LtlSyntaxError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// --- refinement / pipeline errors ---

class EmptyRefinement : public Error {
 public:
  using Error::Error;
};

class UnknownRun : public Error {
 public:
  using Error::Error;
};

class CorruptArtifacts : public Error {
 public:
  using Error::Error;
};

}  // namespace staf
