#include "staf/llm_provider.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "staf/text.hpp"

// httplib is pulled in here only; keep it out of the public headers.
#include <httplib.h>

namespace staf {

using nlohmann::json;

std::string role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_name(const std::string& name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  throw InvalidArgument("unknown chat role: " + name);
}

std::string request_fingerprint(const ChatRequest& request) {
  std::string blob = request.tag;
  blob.push_back('\x1f');
  for (const auto& m : request.messages) {
    blob += m.content;
    blob.push_back('\x1e');
  }
  return fnv1a64_hex(blob);
}

void validate_request(const ChatRequest& request) {
  if (request.messages.empty()) throw InvalidArgument("chat request has no messages");
  if (request.messages.front().role == Role::assistant) {
    throw InvalidArgument("chat request must start with a system or user message");
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    throw InvalidArgument("temperature out of [0,2]");
  }
  if (request.max_output_tokens <= 0) throw InvalidArgument("max_output_tokens must be positive");
}

// --- Transcript ------------------------------------------------------------

void Transcript::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.fingerprint.empty()) continue;
    if (!seen.insert(r.fingerprint).second) {
      throw SchemaViolation("duplicate transcript fingerprint: " + r.fingerprint);
    }
  }
}

Transcript Transcript::from_json_text(const std::string& text) {
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedInput(std::string("transcript is not valid JSON: ") + e.what());
  }
  if (!parsed.is_array()) throw SchemaViolation("transcript must be a JSON array");
  Transcript t;
  for (const auto& entry : parsed) {
    if (!entry.is_object() || !entry.contains("content")) {
      throw SchemaViolation("transcript record needs a \"content\" field");
    }
    TranscriptRecord rec;
    rec.fingerprint = entry.value("fingerprint", "");
    rec.tag = entry.value("tag", "");
    rec.content = entry.at("content").get<std::string>();
    t.records.push_back(std::move(rec));
  }
  t.validate();
  return t;
}

Transcript Transcript::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw MalformedInput("cannot open transcript file: " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

std::string Transcript::to_json_text() const {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({{"fingerprint", r.fingerprint}, {"tag", r.tag}, {"content", r.content}});
  }
  return out.dump(2) + "\n";
}

void Transcript::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write transcript file: " + file.string());
  out << to_json_text();
}

// --- ScriptedProvider ------------------------------------------------------

ScriptedProvider::ScriptedProvider(Transcript transcript) {
  transcript.validate();
  for (auto& r : transcript.records) {
    if (r.fingerprint.empty()) {
      queue_.push_back(std::move(r));
    } else {
      by_fingerprint_.emplace(r.fingerprint, std::move(r));
    }
  }
}

void ScriptedProvider::queue_reply(std::string content, std::string tag) {
  std::lock_guard<std::mutex> lock(mutex_);
  queue_.push_back(TranscriptRecord{"", std::move(tag), std::move(content)});
}

void ScriptedProvider::add_scripted(std::string fingerprint, std::string content,
                                    std::string tag) {
  std::lock_guard<std::mutex> lock(mutex_);
  TranscriptRecord rec{std::move(fingerprint), std::move(tag), std::move(content)};
  if (!by_fingerprint_.emplace(rec.fingerprint, rec).second) {
    throw SchemaViolation("duplicate transcript fingerprint: " + rec.fingerprint);
  }
}

ChatResponse ScriptedProvider::complete(const ChatRequest& request) {
  validate_request(request);
  std::lock_guard<std::mutex> lock(mutex_);
  calls_.push_back(request);
  const std::string fp = request_fingerprint(request);
  if (auto it = by_fingerprint_.find(fp); it != by_fingerprint_.end()) {
    return ChatResponse{it->second.content, id(), std::nullopt};
  }
  if (next_ < queue_.size()) {
    return ChatResponse{queue_[next_++].content, id(), std::nullopt};
  }
  throw ScriptMiss("no scripted reply for request tag \"" + request.tag +
                   "\" (fingerprint " + fp + ")");
}

int ScriptedProvider::call_count() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return static_cast<int>(calls_.size());
}

int ScriptedProvider::call_count_for_tag(const std::string& tag) const {
  std::lock_guard<std::mutex> lock(mutex_);
  int n = 0;
  for (const auto& c : calls_) {
    if (c.tag == tag) ++n;
  }
  return n;
}

std::vector<ChatRequest> ScriptedProvider::calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return calls_;
}

// --- TranscriptRecorder ----------------------------------------------------

TranscriptRecorder::TranscriptRecorder(std::shared_ptr<ChatProvider> inner)
    : inner_(std::move(inner)) {
  if (!inner_) throw InvalidArgument("recorder needs an inner provider");
}

ChatResponse TranscriptRecorder::complete(const ChatRequest& request) {
  ChatResponse response = inner_->complete(request);
  std::lock_guard<std::mutex> lock(mutex_);
  transcript_.records.push_back(
      TranscriptRecord{request_fingerprint(request), request.tag, response.content});
  return response;
}

std::string TranscriptRecorder::id() const { return inner_->id(); }

Transcript TranscriptRecorder::transcript() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return transcript_;
}

// --- LiveProvider ----------------------------------------------------------

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig config;
  if (const char* v = std::getenv("STAF_PROVIDER_URL")) config.base_url = v;
  if (const char* v = std::getenv("STAF_PROVIDER_KEY")) config.api_key = v;
  if (const char* v = std::getenv("STAF_PROVIDER_MODEL")) config.model = v;
  return config;
}

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, int timeout_seconds)
      : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

  HttpResult post(const std::string& path,
                  const std::vector<std::pair<std::string, std::string>>& headers,
                  const std::string& body) override {
    // One client per call keeps the transport shareable across threads.
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_seconds_, 0);
    client.set_read_timeout(timeout_seconds_, 0);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(path, hdrs, body, "application/json");
    HttpResult out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      out.timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                      res.error() == httplib::Error::Read ||
                      res.error() == httplib::Error::Write;
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }

 private:
  std::string base_url_;
  int timeout_seconds_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_httplib_transport(const std::string& base_url,
                                                      int timeout_seconds) {
  return std::make_shared<HttplibTransport>(base_url, timeout_seconds);
}

LiveProvider::LiveProvider(ProviderConfig config, std::shared_ptr<HttpTransport> transport,
                           SleepFn sleep)
    : config_(std::move(config)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  if (config_.base_url.empty()) {
    throw InvalidArgument("live provider needs a base URL (STAF_PROVIDER_URL)");
  }
  if (!transport_) transport_ = make_httplib_transport(config_.base_url, config_.timeout_seconds);
  if (!sleep_) {
    sleep_ = [](int seconds) { std::this_thread::sleep_for(std::chrono::seconds(seconds)); };
  }
}

ChatResponse LiveProvider::complete(const ChatRequest& request) {
  validate_request(request);

  json body = {{"model", config_.model},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", role_name(m.role)}, {"content", m.content}});
  }

  std::vector<std::pair<std::string, std::string>> headers;
  if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);

  std::string last_error = "no attempt made";
  bool last_timeout = false;
  bool last_rate_limited = false;
  last_attempts_ = 0;
  for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
    last_attempts_ = attempt;
    HttpResult result = transport_->post("/chat/completions", headers, body.dump());
    if (result.status == 200) {
      try {
        json parsed = json::parse(result.body);
        ChatResponse response;
        response.content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        response.provider_id = id();
        if (parsed.contains("usage")) {
          TokenUsage usage;
          usage.input = parsed["usage"].value("prompt_tokens", 0);
          usage.output = parsed["usage"].value("completion_tokens", 0);
          response.token_usage = usage;
        }
        return response;
      } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed provider response: ") + e.what());
      }
    }
    last_timeout = result.status == 0 && result.timed_out;
    last_rate_limited = result.status == 429;
    const bool retryable = result.status == 0 || result.status == 429 || result.status >= 500;
    last_error = result.status == 0 ? result.error
                                    : "HTTP " + std::to_string(result.status) + ": " + result.body;
    if (!retryable) throw ProviderError("provider request failed: " + last_error);
    if (attempt < kMaxAttempts) sleep_(1 << (attempt - 1));  // 1s, 2s
  }
  if (last_timeout) throw Timeout("provider timed out after 3 attempts: " + last_error);
  if (last_rate_limited) throw RateLimited("provider rate-limited after 3 attempts: " + last_error);
  throw TransportError("provider unreachable after 3 attempts: " + last_error);
}

// --- complete_structured ---------------------------------------------------

StructuredCompletion complete_structured(ChatProvider& provider, ChatRequest request,
                                         const Validator& validator) {
  ChatResponse first = provider.complete(request);
  std::optional<std::string> problem = validator(first.content);
  if (!problem) return StructuredCompletion{first.content, 0};

  ChatRequest repair = request;
  repair.messages.push_back({Role::assistant, first.content});
  repair.messages.push_back(
      {Role::user, "The previous reply was rejected: " + *problem +
                       "\nReply again with only the corrected output in the requested format."});
  ChatResponse second = provider.complete(repair);
  std::optional<std::string> problem2 = validator(second.content);
  if (!problem2) return StructuredCompletion{second.content, 1};

  throw OutputParseError("structured output invalid after repair: " + *problem2, first.content,
                         second.content);
}

}  // namespace staf
