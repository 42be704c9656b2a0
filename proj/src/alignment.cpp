#include "shield/alignment.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_set>

namespace shield {

namespace {

constexpr std::array<std::string_view, 179> kStopwords = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "you're", "you've",
    "you'll", "you'd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "she's", "her", "hers", "herself", "it", "it's", "its", "itself", "they", "them",
    "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "that'll",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has",
    "had", "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once",
    "here", "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so", "than",
    "too", "very", "s", "t", "can", "will", "just", "don", "don't", "should", "should've", "now",
    "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "aren't", "couldn", "couldn't", "didn",
    "didn't", "doesn", "doesn't", "hadn", "hadn't", "hasn", "hasn't", "haven", "haven't", "isn",
    "isn't", "ma", "mightn", "mightn't", "mustn", "mustn't", "needn", "needn't", "shan", "shan't",
    "shouldn", "shouldn't", "wasn", "wasn't", "weren", "weren't", "won", "won't", "wouldn",
    "wouldn't"};

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> set = [] {
    std::unordered_set<std::string> s;
    for (auto w : kStopwords) s.insert(normalize_token(w));
    return s;
  }();
  return set;
}

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  const auto& small = a.size() <= b.size() ? a.tokens : b.tokens;
  const auto& large = a.size() <= b.size() ? b.tokens : a.tokens;
  for (const auto& t : small) n += large.count(t);
  return n;
}

void require_non_empty(const TokenSet& a, const TokenSet& b, const char* what) {
  if (a.empty() || b.empty()) throw EmptyInput(std::string(what) + " of an empty token set");
}

double mean(const std::vector<AlignmentExample>& xs, double AlignmentExample::*field) {
  double s = 0.0;
  for (const auto& x : xs) s += x.*field;
  return s / static_cast<double>(xs.size());
}

}  // namespace

std::span<const std::string_view> stopword_list() { return kStopwords; }

bool is_stopword(std::string_view normalized_token) {
  return stopword_set().count(std::string(normalized_token)) > 0;
}

std::string_view source_name(TokenSource s) { return s == TokenSource::kLlm ? "llm" : "human"; }

std::string normalize_token(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (text::is_ascii_punct(c)) continue;
    out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  }
  return out;
}

TokenSet normalize_tokens(std::string_view s, TokenSource source) {
  TokenSet set;
  set.source = source;
  for (const auto& raw : text::split_whitespace(s)) {
    auto tok = normalize_token(raw);
    if (!tok.empty() && !is_stopword(tok)) set.tokens.insert(std::move(tok));
  }
  return set;
}

TokenSet normalize_tokens(std::span<const std::string> pieces, TokenSource source) {
  TokenSet set;
  set.source = source;
  for (const auto& piece : pieces) set.tokens.merge(normalize_tokens(piece, source).tokens);
  return set;
}

double overlap_similarity(const TokenSet& a, const TokenSet& b) {
  require_non_empty(a, b, "overlap");
  return static_cast<double>(intersection_size(a, b)) /
         static_cast<double>(std::min(a.size(), b.size()));
}

double jaccard_similarity(const TokenSet& a, const TokenSet& b) {
  require_non_empty(a, b, "jaccard");
  const std::size_t inter = intersection_size(a, b);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double semantic_similarity(std::string_view a_text, std::string_view b_text,
                           const Encoder& encoder) {
  if (text::trim(a_text).empty() || text::trim(b_text).empty()) {
    throw EmptyInput("semantic similarity of blank text");
  }
  const Eigen::VectorXd a = encoder.encode(a_text);
  const Eigen::VectorXd b = encoder.encode(b_text);
  const double denom = a.norm() * b.norm();
  if (denom == 0.0) return 0.0;
  return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

std::vector<std::string> llm_rationale_pieces(const FeatureSet& fs) { return fs.all_features(); }

std::vector<std::string> human_rationale_pieces(const Post& post) {
  std::vector<std::string> out;
  if (!post.human_rationales) return out;
  for (const auto& span : *post.human_rationales) {
    out.insert(out.end(), span.tokens.begin(), span.tokens.end());
  }
  return out;
}

void to_json(nlohmann::json& j, const AlignmentResult& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : r.per_example) {
    per.push_back({{"post_id", e.post_id},
                   {"overlap", e.overlap},
                   {"cosine", e.cosine},
                   {"jaccard", e.jaccard}});
  }
  j = {{"per_example", std::move(per)},
       {"aggregate_overlap", opt(r.aggregate_overlap)},
       {"aggregate_cosine", opt(r.aggregate_cosine)},
       {"aggregate_jaccard", opt(r.aggregate_jaccard)},
       {"n_evaluated", r.n_evaluated},
       {"n_skipped", r.n_skipped},
       {"n_unmatched", r.n_unmatched},
       {"stopword_version", r.stopword_version}};
}

AlignmentResult align_corpus(const std::map<std::string, FeatureSet>& extracted,
                             std::span<const Post> human, const Encoder& encoder) {
  std::vector<const Post*> shared;
  AlignmentResult result;
  for (const auto& p : human) {
    if (extracted.count(p.id)) {
      shared.push_back(&p);
    } else {
      ++result.n_unmatched;
    }
  }
  if (shared.empty()) throw EmptyIntersection("no post id is shared by the features and the corpus");
  std::sort(shared.begin(), shared.end(),
            [](const Post* a, const Post* b) { return a->id < b->id; });

  for (const Post* p : shared) {
    const auto llm_pieces = llm_rationale_pieces(extracted.at(p->id));
    const auto human_pieces = human_rationale_pieces(*p);
    const TokenSet llm = normalize_tokens(llm_pieces, TokenSource::kLlm);
    const TokenSet hum = normalize_tokens(human_pieces, TokenSource::kHuman);
    if (llm.empty() || hum.empty()) {
      ++result.n_skipped;
      continue;
    }
    AlignmentExample ex;
    ex.post_id = p->id;
    ex.overlap = overlap_similarity(llm, hum);
    ex.jaccard = jaccard_similarity(llm, hum);
    ex.cosine = semantic_similarity(text::join(llm_pieces, " "), text::join(human_pieces, " "),
                                    encoder);
    result.per_example.push_back(std::move(ex));
  }
  result.n_evaluated = result.per_example.size();
  if (result.n_evaluated > 0) {
    result.aggregate_overlap = mean(result.per_example, &AlignmentExample::overlap);
    result.aggregate_cosine = mean(result.per_example, &AlignmentExample::cosine);
    result.aggregate_jaccard = mean(result.per_example, &AlignmentExample::jaccard);
  }
  return result;
}

std::string_view token_class_name(TokenClass c) {
  switch (c) {
    case TokenClass::kLlmOnly: return "llm";
    case TokenClass::kHumanOnly: return "human";
    case TokenClass::kBoth: return "both";
    case TokenClass::kNone: break;
  }
  return "none";
}

std::vector<ColoredToken> color_tokens(const Post& post, const FeatureSet* extracted) {
  const TokenSet llm = extracted ? normalize_tokens(llm_rationale_pieces(*extracted), TokenSource::kLlm)
                                 : TokenSet{};
  const TokenSet hum = normalize_tokens(human_rationale_pieces(post), TokenSource::kHuman);
  std::vector<ColoredToken> out;
  for (auto& raw : post_tokens(post.text)) {
    ColoredToken t;
    t.normalized = normalize_token(raw);
    if (is_stopword(t.normalized)) t.normalized.clear();
    t.text = std::move(raw);
    if (!t.normalized.empty()) {
      const bool in_llm = llm.tokens.count(t.normalized) > 0;
      const bool in_hum = hum.tokens.count(t.normalized) > 0;
      t.cls = in_llm && in_hum ? TokenClass::kBoth
              : in_llm         ? TokenClass::kLlmOnly
              : in_hum         ? TokenClass::kHumanOnly
                               : TokenClass::kNone;
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace shield
