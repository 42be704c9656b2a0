#pragma once

#include "shield/datasets.hpp"
#include "shield/embedding.hpp"
#include "shield/feature_set.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shield {

// Pinned stop-word list: the NLTK English list (179 words).
inline constexpr std::string_view kStopwordVersion = "nltk-english-179";

// The list as published, before punctuation stripping.
std::span<const std::string_view> stopword_list();
bool is_stopword(std::string_view normalized_token);

enum class TokenSource { kLlm, kHuman };

std::string_view source_name(TokenSource s);

struct TokenSet {
  std::set<std::string> tokens;
  TokenSource source = TokenSource::kLlm;

  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
};

// Lowercase and drop ASCII punctuation. Empty when nothing is left.
std::string normalize_token(std::string_view raw);

/// Lowercase, strip punctuation, split on whitespace, drop stop-words,
/// deduplicate.
TokenSet normalize_tokens(std::string_view text, TokenSource source);
TokenSet normalize_tokens(std::span<const std::string> pieces, TokenSource source);

/// |a ∩ b| / min(|a|, |b|). EmptyInput when either side is empty.
double overlap_similarity(const TokenSet& a, const TokenSet& b);

/// |a ∩ b| / |a ∪ b|. EmptyInput when either side is empty.
double jaccard_similarity(const TokenSet& a, const TokenSet& b);

/// Cosine of the two encoder embeddings. EmptyInput on blank text.
double semantic_similarity(std::string_view a_text, std::string_view b_text,
                           const Encoder& encoder);

// The LLM side of a post: every feature category, in category order.
std::vector<std::string> llm_rationale_pieces(const FeatureSet& fs);
// The human side of a post: tokens under all spans, in span order.
std::vector<std::string> human_rationale_pieces(const Post& post);

struct AlignmentExample {
  std::string post_id;
  double overlap = 0.0;
  double cosine = 0.0;
  double jaccard = 0.0;
};

struct AlignmentResult {
  std::vector<AlignmentExample> per_example;  // sorted by post id
  std::optional<double> aggregate_overlap;    // unset when nothing was evaluated
  std::optional<double> aggregate_cosine;
  std::optional<double> aggregate_jaccard;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;    // shared ids with an empty side
  std::size_t n_unmatched = 0;  // human posts without extracted features
  std::string stopword_version{kStopwordVersion};
};

void to_json(nlohmann::json& j, const AlignmentResult& r);

/// Scores every post present in both inputs. EmptyIntersection when no id
/// is shared.
AlignmentResult align_corpus(const std::map<std::string, FeatureSet>& extracted,
                             std::span<const Post> human, const Encoder& encoder);

enum class TokenClass { kNone, kLlmOnly, kHumanOnly, kBoth };

std::string_view token_class_name(TokenClass c);

struct ColoredToken {
  std::string text;        // as written in the post
  std::string normalized;  // empty for stop-words and pure punctuation
  TokenClass cls = TokenClass::kNone;
};

/// Classifies each whitespace token of the post by membership of its
/// normalized form in the LLM and human token sets.
std::vector<ColoredToken> color_tokens(const Post& post, const FeatureSet* extracted);

/// Self-contained HTML: aggregate table, then every post with its tokens
/// colored (LLM-only blue, human-only red, both purple). IoError when the
/// file cannot be written.
void render_overlap_report(std::span<const Post> posts,
                           const std::map<std::string, FeatureSet>& extracted,
                           const AlignmentResult& result, const std::filesystem::path& out_path);

std::string overlap_report_html(std::span<const Post> posts,
                                const std::map<std::string, FeatureSet>& extracted,
                                const AlignmentResult& result);

}  // namespace shield
