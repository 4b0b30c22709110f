#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "staf/errors.hpp"

namespace staf {

enum class Role { system, user, assistant };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
};

/// One chat-completion request. `tag` labels the pipeline stage that issued
/// it (analysis, grading, generation, judge, refinement, ...).
struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 4096;
  std::string tag;
};

struct TokenUsage {
  int input = 0;
  int output = 0;
};

struct ChatResponse {
  std::string content;
  std::string provider_id;
  std::optional<TokenUsage> token_usage;
};

/// Stable content-only fingerprint: hashes the tag and the concatenated
/// message contents. Invariant to temperature and max_output_tokens so
/// transcript replay survives tuning changes.
std::string request_fingerprint(const ChatRequest& request);

/// Throws InvalidArgument when the request violates its invariants
/// (no messages, first message from assistant, temperature out of [0,2],
/// non-positive max_output_tokens).
void validate_request(const ChatRequest& request);

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

// --- transcripts -----------------------------------------------------------

/// One recorded exchange. Records without a fingerprint act as an ordered
/// reply queue; records with one are matched exactly.
struct TranscriptRecord {
  std::string fingerprint;
  std::string tag;
  std::string content;
};

struct Transcript {
  std::vector<TranscriptRecord> records;

  /// Throws SchemaViolation when two records share a non-empty fingerprint.
  void validate() const;

  static Transcript from_json_text(const std::string& text);
  static Transcript load(const std::filesystem::path& file);
  std::string to_json_text() const;
  void save(const std::filesystem::path& file) const;
};

/// Deterministic offline provider. Lookup order: exact fingerprint match
/// first, then the next queued fingerprint-less record. No match -> ScriptMiss.
class ScriptedProvider : public ChatProvider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(Transcript transcript);

  /// Append a fingerprint-less record to the reply queue.
  void queue_reply(std::string content, std::string tag = "");
  /// Register a reply for an exact fingerprint.
  void add_scripted(std::string fingerprint, std::string content, std::string tag = "");

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "scripted"; }

  int call_count() const;
  int call_count_for_tag(const std::string& tag) const;
  std::vector<ChatRequest> calls() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, TranscriptRecord> by_fingerprint_;
  std::vector<TranscriptRecord> queue_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> calls_;
};

/// Wraps another provider and records every exchange, so a live run can be
/// replayed offline later.
class TranscriptRecorder : public ChatProvider {
 public:
  explicit TranscriptRecorder(std::shared_ptr<ChatProvider> inner);

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override;

  Transcript transcript() const;

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mutex_;
  Transcript transcript_;
};

// --- live provider ---------------------------------------------------------

struct ProviderConfig {
  std::string base_url;   // e.g. "https://api.example.com/v1"
  std::string api_key;
  std::string model;
  int timeout_seconds = 120;

  /// Reads STAF_PROVIDER_URL / STAF_PROVIDER_KEY / STAF_PROVIDER_MODEL.
  static ProviderConfig from_env();
};

struct HttpResult {
  int status = 0;           // 0 = transport failure (see error)
  std::string body;
  std::string error;
  bool timed_out = false;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& headers,
                          const std::string& body) = 0;
};

/// Transport backed by cpp-httplib against ProviderConfig::base_url.
std::shared_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      int timeout_seconds);

/// OpenAI-compatible chat client. Retries Timeout / RateLimited /
/// TransportError up to 3 attempts with 1s/2s backoff between them.
class LiveProvider : public ChatProvider {
 public:
  using SleepFn = std::function<void(int seconds)>;

  explicit LiveProvider(ProviderConfig config,
                        std::shared_ptr<HttpTransport> transport = nullptr,
                        SleepFn sleep = nullptr);

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "live:" + config_.model; }

  /// Attempts used by the most recent complete() call.
  int last_attempts() const { return last_attempts_; }

  static constexpr int kMaxAttempts = 3;

 private:
  ProviderConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  SleepFn sleep_;
  int last_attempts_ = 0;
};

// --- structured output -----------------------------------------------------

/// Returns std::nullopt if the text is acceptable, otherwise a message
/// describing what is wrong (fed back to the provider for repair).
using Validator = std::function<std::optional<std::string>(const std::string&)>;

struct StructuredCompletion {
  std::string text;
  int repair_count = 0;
};

/// complete() + validation with exactly one repair round: on rejection the
/// original reply and the validator message are appended as conversation
/// turns and the request is retried once. A second rejection throws
/// OutputParseError carrying both raw replies.
StructuredCompletion complete_structured(ChatProvider& provider, ChatRequest request,
                                         const Validator& validator);

}  // namespace staf
