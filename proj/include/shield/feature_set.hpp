#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace shield {

/// Rationale features extracted from one input text.
///
/// A FeatureSet flagged `non_hateful` always has all three lists empty, and
/// list elements are non-empty and whitespace-trimmed. `raw_response` keeps
/// the model output byte-for-byte for auditing.
struct FeatureSet {
  std::vector<std::string> rationales;
  std::vector<std::string> derogatory_language;
  std::vector<std::string> cuss_words;
  bool non_hateful = false;
  std::string raw_response;
  std::string prompt_version;
  std::string model_id;

  bool operator==(const FeatureSet&) const = default;

  bool has_features() const {
    return !rationales.empty() || !derogatory_language.empty() || !cuss_words.empty();
  }

  // All features in category order (rationales, derogatory, cuss).
  std::vector<std::string> all_features() const;
};

void to_json(nlohmann::json& j, const FeatureSet& fs);
void from_json(const nlohmann::json& j, FeatureSet& fs);

// Digest over the feature content only (lists + flag), not over provenance.
std::string feature_digest(const FeatureSet& fs);

}  // namespace shield
