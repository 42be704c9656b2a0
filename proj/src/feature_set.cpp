#include "shield/feature_set.hpp"

#include "shield/text.hpp"

namespace shield {

std::vector<std::string> FeatureSet::all_features() const {
  std::vector<std::string> out;
  out.reserve(rationales.size() + derogatory_language.size() + cuss_words.size());
  out.insert(out.end(), rationales.begin(), rationales.end());
  out.insert(out.end(), derogatory_language.begin(), derogatory_language.end());
  out.insert(out.end(), cuss_words.begin(), cuss_words.end());
  return out;
}

void to_json(nlohmann::json& j, const FeatureSet& fs) {
  j = nlohmann::json{
      {"rationales", fs.rationales},
      {"derogatory_language", fs.derogatory_language},
      {"cuss_words", fs.cuss_words},
      {"non_hateful", fs.non_hateful},
      {"raw_response", fs.raw_response},
      {"prompt_version", fs.prompt_version},
      {"model_id", fs.model_id},
  };
}

void from_json(const nlohmann::json& j, FeatureSet& fs) {
  fs.rationales = j.at("rationales").get<std::vector<std::string>>();
  fs.derogatory_language = j.at("derogatory_language").get<std::vector<std::string>>();
  fs.cuss_words = j.at("cuss_words").get<std::vector<std::string>>();
  fs.non_hateful = j.at("non_hateful").get<bool>();
  fs.raw_response = j.value("raw_response", std::string{});
  fs.prompt_version = j.value("prompt_version", std::string{});
  fs.model_id = j.value("model_id", std::string{});
}

std::string feature_digest(const FeatureSet& fs) {
  nlohmann::json j{
      {"r", fs.rationales},
      {"d", fs.derogatory_language},
      {"c", fs.cuss_words},
      {"n", fs.non_hateful},
  };
  return text::sha256_hex(j.dump());
}

}  // namespace shield
