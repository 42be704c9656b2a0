#include "shield/baselines.hpp"

#include "shield/error.hpp"
#include "shield/feature_cache.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace shield {

const std::string_view kOneShotInstructionV1 =
    "You are a hate speech detection bot. Given a text, respond with the classification label "
    "towards given text with either hateful labeled as 1 or non-hateful labeled as 0. Note: It is "
    "essential to give classification for all the texts.";

std::string build_oneshot_prompt(std::string_view text, const Exemplar& exemplar) {
  if (text::trim(text).empty()) throw EmptyInput("one-shot query text is blank");
  if (text::trim(exemplar.text).empty()) throw EmptyInput("one-shot exemplar text is blank");
  std::string p(kOneShotInstructionV1);
  p += "\nText: \"";
  p += exemplar.text;
  p += "\"\nLabel: ";
  p += exemplar.label ? '1' : '0';
  p += "\nText: \"";
  p += text;
  p += "\"\nLabel:";
  return p;
}

std::optional<int> parse_oneshot_label(std::string_view reply) {
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  bool seen0 = false;
  bool seen1 = false;
  for (std::size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c != '0' && c != '1') continue;
    const char prev = i > 0 ? reply[i - 1] : ' ';
    const char next = i + 1 < reply.size() ? reply[i + 1] : ' ';
    if (alnum(prev) || alnum(next)) continue;
    // Part of a decimal or grouped number such as "0.5", "1,000" or "-1".
    if ((prev == '.' || prev == ',') && i > 1 && digit(reply[i - 2])) continue;
    if ((next == '.' || next == ',') && i + 2 < reply.size() && digit(reply[i + 2])) continue;
    if (prev == '-' || prev == '+') continue;
    (c == '0' ? seen0 : seen1) = true;
  }
  if (seen0 == seen1) return std::nullopt;
  return seen1 ? 1 : 0;
}

OneShotResult classify_oneshot(const Post& post, LlmClient& client, const Exemplar& exemplar,
                               const RetryPolicy& retry, RateLimiter* limiter) {
  LlmRequest req{build_oneshot_prompt(post.text, exemplar), post.text, LlmTask::kOneShot};
  const auto start = std::chrono::steady_clock::now();
  OneShotResult r;
  r.post_id = post.id;
  r.gold = post.label;
  r.raw_output = complete_with_retry(client, req, retry, limiter);
  r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - start);
  r.label = parse_oneshot_label(r.raw_output);
  return r;
}

OneShotEvaluation evaluate_oneshot(std::span<const Post> posts, LlmClient& client,
                                   const OneShotOptions& options) {
  if (posts.empty()) throw EmptyDataset("one-shot evaluation on zero posts");

  OneShotEvaluation eval;
  eval.strict = options.strict;
  eval.results.resize(posts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < posts.size() && !failed; i = next++) {
      try {
        eval.results[i] =
            classify_oneshot(posts[i], client, options.exemplar, options.retry, options.limiter);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  {
    const std::size_t n = std::clamp<std::size_t>(options.parallelism, 1, posts.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  std::sort(eval.results.begin(), eval.results.end(),
            [](const OneShotResult& a, const OneShotResult& b) { return a.post_id < b.post_id; });
  for (const auto& r : eval.results) {
    if (r.abstained()) {
      ++eval.n_abstain;
    } else if (*r.label == r.gold) {
      ++eval.n_correct;
    }
  }
  const auto n = static_cast<double>(posts.size());
  const std::size_t parsed = posts.size() - eval.n_abstain;
  if (parsed > 0) eval.lenient_accuracy = static_cast<double>(eval.n_correct) / static_cast<double>(parsed);
  eval.strict_accuracy = static_cast<double>(eval.n_correct) / n;
  eval.abstain_rate = static_cast<double>(eval.n_abstain) / n;
  return eval;
}

void write_oneshot_results(const std::filesystem::path& path, const OneShotEvaluation& eval) {
  std::ostringstream out;
  for (const auto& r : eval.results) {
    nlohmann::json j = {{"post_id", r.post_id},
                        {"raw_output", r.raw_output},
                        {"label", r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr)},
                        {"gold", r.gold}};
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  atomic_write(path, out.str());
}

nlohmann::json oneshot_summary(const OneShotEvaluation& eval, const LlmClient& client) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"accuracy", opt(eval.accuracy())},
          {"mode", eval.strict ? "strict" : "lenient"},
          {"lenient_accuracy", opt(eval.lenient_accuracy)},
          {"strict_accuracy", eval.strict_accuracy},
          {"abstain_rate", eval.abstain_rate},
          {"n_posts", eval.results.size()},
          {"n_correct", eval.n_correct},
          {"n_abstain", eval.n_abstain},
          {"model_id", client.model_id()},
          {"prompt_version", kOneShotPromptVersion}};
}

}  // namespace shield
