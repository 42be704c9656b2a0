#pragma once

#include "shield/datasets.hpp"
#include "shield/llm_client.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shield {

inline constexpr std::string_view kOneShotPromptVersion = "v1";

extern const std::string_view kOneShotInstructionV1;

struct Exemplar {
  std::string text;
  int label = 1;
};

/// Instruction, one labeled exemplar, then the query text. EmptyInput on
/// blank text or exemplar text.
std::string build_oneshot_prompt(std::string_view text, const Exemplar& exemplar);

/// Label carried by a reply: the standalone 0 or 1 it contains. Replies
/// holding both digits, or neither, abstain (nullopt). Digits that belong to
/// a longer number ("10", "0.5") do not count.
std::optional<int> parse_oneshot_label(std::string_view reply);

struct OneShotResult {
  std::string post_id;
  std::string raw_output;
  std::optional<int> label;  // nullopt: abstained
  int gold = 0;
  std::chrono::milliseconds latency{0};

  bool abstained() const { return !label.has_value(); }
};

// TransportError once retries are exhausted.
OneShotResult classify_oneshot(const Post& post, LlmClient& client, const Exemplar& exemplar,
                               const RetryPolicy& retry = {}, RateLimiter* limiter = nullptr);

struct OneShotOptions {
  Exemplar exemplar;
  RetryPolicy retry;
  RateLimiter* limiter = nullptr;
  std::size_t parallelism = 4;
  bool strict = false;  // headline accuracy counts abstentions as wrong
};

struct OneShotEvaluation {
  std::vector<OneShotResult> results;  // sorted by post id
  std::size_t n_correct = 0;
  std::size_t n_abstain = 0;
  std::optional<double> lenient_accuracy;  // over parsed posts; unset if none parsed
  double strict_accuracy = 0.0;            // over all posts
  double abstain_rate = 0.0;
  bool strict = false;

  std::optional<double> accuracy() const {
    return strict ? std::optional<double>(strict_accuracy) : lenient_accuracy;
  }
};

/// EmptyDataset when posts is empty.
OneShotEvaluation evaluate_oneshot(std::span<const Post> posts, LlmClient& client,
                                   const OneShotOptions& options);

// JSON-lines of {post_id, raw_output, label (null on abstain), gold}.
void write_oneshot_results(const std::filesystem::path& path, const OneShotEvaluation& eval);
// Summary object with accuracy, abstain rate, model id and prompt version.
nlohmann::json oneshot_summary(const OneShotEvaluation& eval, const LlmClient& client);

}  // namespace shield
