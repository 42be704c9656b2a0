#pragma once

#include "shield/lexicon.hpp"

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <utility>

namespace shield {

enum class LlmTask { kFeatures, kOneShot };

std::string_view task_name(LlmTask task);

/// One completion request. `input_text` is the raw post text the prompt was
/// built from; offline clients key on it instead of the full prompt.
struct LlmRequest {
  std::string prompt;
  std::string input_text;
  LlmTask task = LlmTask::kFeatures;
};

struct DecodingParams {
  double temperature = 0.1;
  double top_p = 1.0;
  int max_tokens = 512;
};

/// Behavioral contract shared by the live, replay and mock clients.
class LlmClient {
 public:
  virtual ~LlmClient() = default;

  // Throws TransportError for transient failures.
  virtual std::string complete(const LlmRequest& request) = 0;

  virtual const std::string& model_id() const = 0;
  virtual DecodingParams decoding() const = 0;

  std::size_t calls() const { return calls_.load(); }

 protected:
  void count_call() { calls_.fetch_add(1); }

 private:
  std::atomic<std::size_t> calls_{0};
};

struct HttpClientOptions {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key;
  std::string model_id = "gpt-3.5-turbo-0613";
  DecodingParams decoding;
  std::chrono::seconds timeout{60};
};

/// OpenAI-compatible chat-completions client. The prompt is sent as a single
/// user message.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientOptions options);

  std::string complete(const LlmRequest& request) override;
  const std::string& model_id() const override { return options_.model_id; }
  DecodingParams decoding() const override { return options_.decoding; }

 private:
  HttpClientOptions options_;
};

// Counts outbound connection attempts made by HttpLlmClient in this process.
std::size_t network_attempts();

/// Answers from recorded responses, keyed by task and normalized input
/// text. Unseen inputs raise IoError; nothing is ever fetched.
class ReplayLlmClient final : public LlmClient {
 public:
  ReplayLlmClient(std::string model_id, DecodingParams decoding = {});

  // JSON-lines of {"text", "response", "task"?}; task defaults to "features".
  void load_jsonl(const std::filesystem::path& path);

  void add(LlmTask task, std::string_view input_text, std::string response);

  std::string complete(const LlmRequest& request) override;
  const std::string& model_id() const override { return model_id_; }
  DecodingParams decoding() const override { return decoding_; }

 private:
  std::string model_id_;
  DecodingParams decoding_;
  std::map<std::pair<LlmTask, std::string>, std::string> responses_;
};

/// Deterministic offline stand-in: feature requests are answered with the
/// JSON form of lexicon_extract, one-shot requests with "1" when any lexicon
/// term matches and "0" otherwise.
class LexiconMockClient final : public LlmClient {
 public:
  explicit LexiconMockClient(Lexicon lexicon, std::string model_id = "lexicon-mock");

  std::string complete(const LlmRequest& request) override;
  const std::string& model_id() const override { return model_id_; }
  DecodingParams decoding() const override { return {}; }

 private:
  Lexicon lexicon_;
  std::string model_id_;
};

/// Spaces calls at least 1/rate apart across all threads sharing it.
class RateLimiter {
 public:
  explicit RateLimiter(double max_calls_per_second = 0.0);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
  std::mutex mutex_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  // Injected so tests can observe backoff without sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

// Calls client.complete, retrying TransportError up to policy.max_retries
// times with exponential backoff; rethrows the last TransportError.
std::string complete_with_retry(LlmClient& client, const LlmRequest& request,
                                const RetryPolicy& policy, RateLimiter* limiter = nullptr);

}  // namespace shield
