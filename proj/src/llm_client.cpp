#include "shield/llm_client.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <thread>

namespace shield {
namespace {

std::atomic<std::size_t> g_network_attempts{0};

LlmTask parse_task(const std::string& name, std::size_t line) {
  if (name == "features") return LlmTask::kFeatures;
  if (name == "oneshot") return LlmTask::kOneShot;
  throw FormatError("replay line " + std::to_string(line) + ": unknown task '" + name + "'");
}

}  // namespace

std::string_view task_name(LlmTask task) {
  return task == LlmTask::kFeatures ? "features" : "oneshot";
}

std::size_t network_attempts() { return g_network_attempts.load(); }

// ---------------------------------------------------------------------------

HttpLlmClient::HttpLlmClient(HttpClientOptions options) : options_(std::move(options)) {
  if (options_.api_key.empty()) throw ConfigError("extraction.api_key");
}

std::string HttpLlmClient::complete(const LlmRequest& request) {
  count_call();

  // Split "scheme://host[:port]/path".
  const auto& url = options_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("extraction.endpoint");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  const nlohmann::json body = {
      {"model", options_.model_id},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", options_.decoding.temperature},
      {"top_p", options_.decoding.top_p},
      {"max_tokens", options_.decoding.max_tokens},
  };

  g_network_attempts.fetch_add(1);
  httplib::Client client(origin);
  const auto timeout = static_cast<time_t>(options_.timeout.count());
  client.set_connection_timeout(timeout, 0);
  client.set_read_timeout(timeout, 0);
  client.set_write_timeout(timeout, 0);
  const httplib::Headers headers = {{"Authorization", "Bearer " + options_.api_key}};

  auto res = client.Post(path, headers,
                         body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                         "application/json");
  if (!res) {
    throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + origin);
  }
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw TransportError("non-JSON body from " + origin);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("unexpected completion payload from " + origin);
  }
}

// ---------------------------------------------------------------------------

ReplayLlmClient::ReplayLlmClient(std::string model_id, DecodingParams decoding)
    : model_id_(std::move(model_id)), decoding_(decoding) {}

void ReplayLlmClient::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open replay fixture " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError("replay line " + std::to_string(lineno) + ": not a JSON object");
    }
    if (!j.contains("text") || !j.contains("response")) {
      throw MissingField("replay line " + std::to_string(lineno) + ": needs text and response");
    }
    add(parse_task(j.value("task", std::string("features")), lineno),
        j.at("text").get<std::string>(), j.at("response").get<std::string>());
  }
}

void ReplayLlmClient::add(LlmTask task, std::string_view input_text, std::string response) {
  responses_[{task, text::normalize_for_key(input_text)}] = std::move(response);
}

std::string ReplayLlmClient::complete(const LlmRequest& request) {
  count_call();
  const auto it = responses_.find({request.task, text::normalize_for_key(request.input_text)});
  if (it == responses_.end()) {
    throw IoError("replay fixture has no " + std::string(task_name(request.task)) +
                  " response for input: " + request.input_text.substr(0, 80));
  }
  return it->second;
}

// ---------------------------------------------------------------------------

LexiconMockClient::LexiconMockClient(Lexicon lexicon, std::string model_id)
    : lexicon_(std::move(lexicon)), model_id_(std::move(model_id)) {}

std::string LexiconMockClient::complete(const LlmRequest& request) {
  count_call();
  const FeatureSet fs = lexicon_extract(request.input_text, lexicon_);
  if (request.task == LlmTask::kOneShot) return fs.non_hateful ? "0" : "1";
  if (fs.non_hateful) return "non-hateful";
  const nlohmann::json j = {
      {"rationales", fs.rationales},
      {"derogatory_language", fs.derogatory_language},
      {"cuss_words", fs.cuss_words},
  };
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(double max_calls_per_second) {
  if (max_calls_per_second > 0.0) {
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / max_calls_per_second));
  }
}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::steady_clock::duration::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

std::string complete_with_retry(LlmClient& client, const LlmRequest& request,
                                const RetryPolicy& policy, RateLimiter* limiter) {
  for (int attempt = 0;; ++attempt) {
    if (limiter) limiter->acquire();
    try {
      return client.complete(request);
    } catch (const TransportError&) {
      if (attempt >= policy.max_retries) throw;
      const auto delay = std::chrono::milliseconds(static_cast<long long>(
          static_cast<double>(policy.initial_backoff.count()) * std::pow(policy.multiplier, attempt)));
      if (policy.sleep) {
        policy.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
  }
}

}  // namespace shield
