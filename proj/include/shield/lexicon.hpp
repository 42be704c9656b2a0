#pragma once

#include "shield/feature_set.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace shield {

enum class FeatureCategory { kDerogatory, kCuss };

// Term -> category. Terms may span several tokens ("black people").
using Lexicon = std::map<std::string, FeatureCategory>;

// JSON object {"term": "derogatory" | "cuss", ...}.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon lexicon_from_json(const nlohmann::json& j);

/// Deterministic rule-based extraction.
///
/// Tokens are matched case-insensitively and whole-token (surrounding
/// punctuation ignored). Matched terms are reported with their lexicon
/// spelling in order of first occurrence; every sentence holding a match is
/// added to the rationales. No match yields a non-hateful FeatureSet.
FeatureSet lexicon_extract(std::string_view text, const Lexicon& lexicon);

}  // namespace shield
