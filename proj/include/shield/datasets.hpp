#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shield {

enum class Platform { kGab, kReddit, kTwitter, kYoutube, kImplicitHs, kOther };

std::string_view platform_name(Platform p);
// Throws FormatError for unknown names.
Platform parse_platform(std::string_view name);

/// Human rationale over whitespace tokens [token_start, token_end).
struct RationaleSpan {
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::vector<std::string> tokens;

  bool operator==(const RationaleSpan&) const = default;
};

struct Post {
  std::string id;
  std::string text;
  int label = 0;  // 1 hateful, 0 non-hateful
  Platform platform = Platform::kOther;
  std::optional<std::vector<RationaleSpan>> human_rationales;

  bool operator==(const Post&) const = default;
};

enum class DataFormat { kJsonl, kCsv, kHatexplain };

DataFormat parse_format(std::string_view name);

// Raw label (as written in the file, numbers stringified) -> binary label.
// A nullopt target drops the row.
using LabelMap = std::map<std::string, std::optional<int>>;

// Built-in mapping for a format/platform pair; config entries override it.
LabelMap default_label_map(DataFormat format, Platform platform);

struct LoadOptions {
  DataFormat format = DataFormat::kJsonl;
  Platform platform = Platform::kOther;  // used when a row carries none
  LabelMap labels;                       // merged over default_label_map
};

struct LoadResult {
  std::vector<Post> posts;
  std::size_t n_dropped = 0;  // rows whose label maps to "drop" or ties
};

/// Reads a corpus file. Either every row loads or a row-addressed
/// FormatError / MissingField is thrown.
LoadResult load_posts(const std::filesystem::path& path, const LoadOptions& options);

/// Lowercase, `<url>` / `<user>` substitution, whitespace collapse, trim.
/// Idempotent.
std::string preprocess_text(std::string_view raw);

// Applies preprocess_text to every post and drops posts left empty.
std::vector<Post> prepare_posts(std::vector<Post> posts, std::size_t* n_empty = nullptr);

struct Split {
  std::vector<Post> train;
  std::vector<Post> val;
  std::vector<Post> test;
};

/// Label-stratified partition. Within each label stratum the posts are
/// shuffled with a seeded Mersenne Twister and cut by rounded ratios; each
/// part keeps the input order.
Split split_dataset(std::span<const Post> posts, std::array<double, 3> ratios, std::uint64_t seed);

struct DatasetStats {
  std::size_t n_posts = 0;
  std::size_t n_hateful = 0;
  double hate_pct = 0.0;  // one decimal

  bool operator==(const DatasetStats&) const = default;
};

DatasetStats dataset_stats(std::span<const Post> posts);

// Canonical post format, one JSON object per line.
void write_posts_jsonl(const std::filesystem::path& path, std::span<const Post> posts);

// Whitespace tokens, as used by rationale spans.
std::vector<std::string> post_tokens(std::string_view text);

}  // namespace shield
