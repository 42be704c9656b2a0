#pragma once

#include "shield/datasets.hpp"
#include "shield/feature_cache.hpp"
#include "shield/feature_set.hpp"
#include "shield/llm_client.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shield {

inline constexpr std::string_view kFeaturePromptVersion = "v1";

// Instruction block of the v1 extraction prompt, without the text slot.
extern const std::string_view kFeaturePromptInstructionV1;

/// Fills the input text into the versioned extraction template. The text is
/// inserted as given; only blank input is rejected (EmptyInput).
std::string build_feature_prompt(std::string_view text,
                                 std::string_view template_version = kFeaturePromptVersion);

/// Interprets a raw extraction reply.
///
/// Accepted shapes, tried in order:
///  - the bare answer "non-hateful" (any casing, optional quotes/period);
///  - a JSON value, optionally in a ``` fence;
///  - the first balanced {...} object found inside surrounding prose.
/// Keys are matched case-insensitively with `_`, `-` and space treated alike
/// (see the alias table in extraction.cpp); scalar values are promoted to
/// one-element lists. Anything else raises ParseError. No other exception
/// escapes for any input.
FeatureSet parse_feature_response(std::string_view raw);

struct ExtractOptions {
  std::string prompt_version{kFeaturePromptVersion};
  RetryPolicy retry;
  RateLimiter* limiter = nullptr;
  std::size_t parallelism = 4;
  // When false the first ParseError aborts the corpus run.
  bool skip_unparseable = false;
};

/// Cache-first extraction for one text. On a miss the client is called
/// (with retries), the reply parsed and stored. Unparseable replies are
/// written next to the cache before ParseError is rethrown.
FeatureSet extract_features(std::string_view text, LlmClient& client, FeatureCache* cache,
                            const ExtractOptions& options = {});

struct CorpusExtraction {
  std::map<std::string, FeatureSet> features;  // by post id
  std::vector<std::string> failed_ids;         // only with skip_unparseable
};

CorpusExtraction extract_corpus(std::span<const Post> posts, LlmClient& client,
                                FeatureCache* cache, const ExtractOptions& options = {});

// Feature output file: one JSON object per post, in the given post order.
void write_features_jsonl(const std::filesystem::path& path, std::span<const Post> posts,
                          const std::map<std::string, FeatureSet>& features);
std::map<std::string, FeatureSet> read_features_jsonl(const std::filesystem::path& path);

}  // namespace shield
