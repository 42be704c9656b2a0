#include "shield/lexicon.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace shield {
namespace {

std::string match_key(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  while (b < e && text::is_ascii_punct(token[b])) ++b;
  while (e > b && text::is_ascii_punct(token[e - 1])) --e;
  return text::to_lower_ascii(token.substr(b, e - b));
}

std::vector<std::string> sentences_of(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end) {
    std::string sentence = text::trim(s.substr(start, end - start));
    if (!sentence.empty()) out.push_back(std::move(sentence));
    start = end;
  };
  while (i < s.size()) {
    char c = s[i];
    if (c == '\n') {
      flush(i);
      start = ++i;
      continue;
    }
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
      if (j == s.size() || text::is_ascii_space(s[j])) {
        flush(j);
      }
      i = j;
      continue;
    }
    ++i;
  }
  flush(s.size());
  return out;
}

struct Term {
  std::vector<std::string> tokens;
  const std::string* spelling;
  FeatureCategory category;
};

}  // namespace

Lexicon lexicon_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("lexicon must be a JSON object of term -> category");
  Lexicon lex;
  for (const auto& [term, cat] : j.items()) {
    if (!cat.is_string()) throw FormatError("lexicon category for '" + term + "' must be a string");
    const auto name = text::to_lower_ascii(cat.get<std::string>());
    const auto spelling = text::trim(term);
    if (spelling.empty()) throw FormatError("lexicon contains an empty term");
    if (name == "derogatory" || name == "derogatory_language") {
      lex.emplace(spelling, FeatureCategory::kDerogatory);
    } else if (name == "cuss" || name == "cuss_words" || name == "profanity") {
      lex.emplace(spelling, FeatureCategory::kCuss);
    } else {
      throw FormatError("unknown lexicon category '" + name + "' for term '" + term + "'");
    }
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("lexicon " + path.string() + ": " + e.what());
  }
  return lexicon_from_json(j);
}

FeatureSet lexicon_extract(std::string_view input, const Lexicon& lexicon) {
  std::vector<Term> terms;
  for (const auto& [spelling, category] : lexicon) {
    Term t{{}, &spelling, category};
    for (const auto& tok : text::split_whitespace(spelling)) {
      auto k = match_key(tok);
      if (!k.empty()) t.tokens.push_back(std::move(k));
    }
    if (!t.tokens.empty()) terms.push_back(std::move(t));
  }
  std::stable_sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) {
    return a.tokens.size() > b.tokens.size();
  });

  FeatureSet fs;
  std::set<std::string> seen_terms;
  for (const auto& sentence : sentences_of(input)) {
    std::vector<std::string> keys;
    for (const auto& tok : text::split_whitespace(sentence)) keys.push_back(match_key(tok));

    bool matched = false;
    std::size_t i = 0;
    while (i < keys.size()) {
      const Term* hit = nullptr;
      for (const auto& t : terms) {
        if (i + t.tokens.size() > keys.size()) continue;
        if (std::equal(t.tokens.begin(), t.tokens.end(), keys.begin() + static_cast<std::ptrdiff_t>(i))) {
          hit = &t;
          break;
        }
      }
      if (!hit) {
        ++i;
        continue;
      }
      matched = true;
      if (seen_terms.insert(*hit->spelling).second) {
        auto& list = hit->category == FeatureCategory::kDerogatory ? fs.derogatory_language
                                                                    : fs.cuss_words;
        list.push_back(*hit->spelling);
      }
      i += hit->tokens.size();
    }
    if (matched &&
        std::find(fs.rationales.begin(), fs.rationales.end(), sentence) == fs.rationales.end()) {
      fs.rationales.push_back(sentence);
    }
  }
  fs.non_hateful = !fs.has_features();
  return fs;
}

}  // namespace shield
