#include "shield/alignment.hpp"
#include "shield/error.hpp"
#include "shield/extraction.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <random>
#include <regex>

using namespace shield;
using shield::testing::fixture;

namespace {

TokenSet tokens(std::initializer_list<const char*> words, TokenSource src = TokenSource::kLlm) {
  TokenSet s;
  s.source = src;
  for (const char* w : words) s.tokens.insert(w);
  return s;
}

// Maps "x..." texts to e1 and everything else to e2.
class AxisEncoder final : public Encoder {
 public:
  AxisEncoder() : Encoder({"axis", false, 512}) {}
  std::size_t hidden_size() const override { return 2; }
  Eigen::VectorXd encode(std::string_view text) const override {
    return text.starts_with("x") ? Eigen::Vector2d(3.0, 0.0) : Eigen::Vector2d(0.0, 0.5);
  }
  std::string parameter_digest() const override { return "axis"; }
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<AxisEncoder>(); }
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : " ") + s;
  return out;
}

struct AlignFixture {
  std::vector<Post> posts;
  std::map<std::string, FeatureSet> features;
  nlohmann::json expected;

  AlignFixture() {
    LoadOptions o;
    o.format = DataFormat::kHatexplain;
    posts = prepare_posts(load_posts(fixture("hatexplain_align/dataset.json"), o).posts);
    ReplayLlmClient client("gpt-3.5-turbo-0613");
    client.load_jsonl(fixture("hatexplain_align/replay.jsonl"));
    features = extract_corpus(posts, client, nullptr).features;
    expected = shield::testing::read_json(fixture("hatexplain_align/expected.json"));
  }
};

// Per-post class -> token texts as rendered in the report.
std::map<std::string, std::map<std::string, std::set<std::string>>> parse_report(const std::string& html) {
  std::map<std::string, std::map<std::string, std::set<std::string>>> out;
  const std::regex post_re(R"re(<div class="post" id="post-([^"]+)">)re");
  const std::regex span_re(R"re(<span class="(llm|human|both)">([^<]*)</span>)re");
  std::vector<std::pair<std::string, std::size_t>> starts;
  for (auto it = std::sregex_iterator(html.begin(), html.end(), post_re); it != std::sregex_iterator(); ++it) {
    starts.emplace_back((*it)[1], static_cast<std::size_t>(it->position()));
  }
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1].second : html.size();
    const std::string body = html.substr(starts[i].second, end - starts[i].second);
    auto& classes = out[starts[i].first];
    for (auto it = std::sregex_iterator(body.begin(), body.end(), span_re); it != std::sregex_iterator(); ++it) {
      std::string word;
      for (char c : std::string((*it)[2])) {
        if (!std::ispunct(static_cast<unsigned char>(c))) word.push_back(static_cast<char>(std::tolower(c)));
      }
      classes[(*it)[1]].insert(word);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("alignment") {

TEST_CASE("stop-word list") {
  CHECK(stopword_list().size() == 179);
  CHECK(kStopwordVersion == "nltk-english-179");
  CHECK(is_stopword("the"));
  CHECK(is_stopword("dont"));
  CHECK_FALSE(is_stopword("muslims"));
}

TEST_CASE("normalization") {
  CHECK(normalize_token("Muslims!") == "muslims");
  CHECK(normalize_token("...") == "");
  CHECK(normalize_tokens("The black muslims!", TokenSource::kLlm).tokens ==
        std::set<std::string>{"black", "muslims"});
  CHECK(normalize_tokens("", TokenSource::kLlm).empty());
  CHECK(normalize_tokens("the and of", TokenSource::kHuman).empty());
  const std::vector<std::string> pieces{"Black people", "black", "PEOPLE, again"};
  CHECK(normalize_tokens(pieces, TokenSource::kHuman).tokens ==
        std::set<std::string>{"black", "people"});
}

TEST_CASE("overlap and jaccard against brute force") {
  std::mt19937 gen(21);
  const std::vector<std::string> vocab = {"a1", "b2", "c3", "d4", "e5", "f6", "g7", "h8", "i9", "j10"};
  for (int trial = 0; trial < 1000; ++trial) {
    TokenSet a, b;
    while (a.empty()) {
      for (const auto& w : vocab) if (gen() % 3 == 0) a.tokens.insert(w);
    }
    while (b.empty()) {
      for (const auto& w : vocab) if (gen() % 3 == 0) b.tokens.insert(w);
    }
    std::size_t inter = 0;
    for (const auto& w : vocab) inter += a.tokens.count(w) && b.tokens.count(w);
    std::size_t uni = 0;
    for (const auto& w : vocab) uni += a.tokens.count(w) || b.tokens.count(w);
    const double ov = static_cast<double>(inter) / static_cast<double>(std::min(a.size(), b.size()));
    CHECK(overlap_similarity(a, b) == doctest::Approx(ov).epsilon(1e-15));
    CHECK(overlap_similarity(b, a) == overlap_similarity(a, b));
    CHECK(jaccard_similarity(a, b) ==
          doctest::Approx(static_cast<double>(inter) / static_cast<double>(uni)).epsilon(1e-15));
    CHECK(overlap_similarity(a, a) == 1.0);
    const double o = overlap_similarity(a, b);
    CHECK((o >= 0.0 && o <= 1.0));
  }
  CHECK(overlap_similarity(tokens({"x", "y"}), tokens({"x", "y", "z", "w"})) == 1.0);
  CHECK(jaccard_similarity(tokens({"x", "y"}), tokens({"x", "y", "z", "w"})) == 0.5);
  CHECK_THROWS_AS(overlap_similarity(tokens({}), tokens({"x"})), EmptyInput);
  CHECK_THROWS_AS(jaccard_similarity(tokens({"x"}), tokens({})), EmptyInput);
}

TEST_CASE("semantic similarity") {
  EncoderRegistry reg;
  const auto enc = reg.load({"feature-default", false, 512});
  CHECK(semantic_similarity("black muslims", "black muslims", *enc) == doctest::Approx(1.0).epsilon(1e-12));
  const AxisEncoder axis;
  CHECK(semantic_similarity("x marks", "y marks", axis) == doctest::Approx(0.0));
  CHECK(semantic_similarity("x marks", "x again", axis) == doctest::Approx(1.0));
  CHECK_THROWS_AS(semantic_similarity(" ", "x", axis), EmptyInput);
}

TEST_CASE("hatexplain fixture matches hand-computed scores") {
  const AlignFixture fx;
  REQUIRE(fx.posts.size() == 22);
  EncoderRegistry reg;
  const auto enc = reg.load({"feature-default", false, 512});
  const auto r = align_corpus(fx.features, fx.posts, *enc);

  CHECK(r.n_evaluated == fx.expected["n_evaluated"].get<std::size_t>());
  CHECK(r.n_skipped == fx.expected["n_skipped"].get<std::size_t>());
  CHECK(r.n_unmatched == 0);
  CHECK(r.stopword_version == "nltk-english-179");
  REQUIRE(r.per_example.size() == fx.expected["examples"].size());
  CHECK(std::is_sorted(r.per_example.begin(), r.per_example.end(),
                       [](const auto& a, const auto& b) { return a.post_id < b.post_id; }));

  std::map<std::string, const Post*> by_id;
  for (const auto& p : fx.posts) by_id[p.id] = &p;

  double overlap_sum = 0, cosine_sum = 0;
  for (std::size_t i = 0; i < r.per_example.size(); ++i) {
    const auto& want = fx.expected["examples"][i];
    const auto& got = r.per_example[i];
    CAPTURE(got.post_id);
    CHECK(got.post_id == want["id"].get<std::string>());

    const auto llm = normalize_tokens(llm_rationale_pieces(fx.features.at(got.post_id)), TokenSource::kLlm);
    const auto hum = normalize_tokens(human_rationale_pieces(*by_id.at(got.post_id)), TokenSource::kHuman);
    CHECK(llm.tokens == want["llm"].get<std::set<std::string>>());
    CHECK(hum.tokens == want["human"].get<std::set<std::string>>());

    const double ov = want["overlap"][0].get<double>() / want["overlap"][1].get<double>();
    const double jc = want["jaccard"][0].get<double>() / want["jaccard"][1].get<double>();
    CHECK(std::abs(got.overlap - ov) <= 1e-9);
    CHECK(std::abs(got.jaccard - jc) <= 1e-9);

    const double cos = cosine(enc->encode(join(llm_rationale_pieces(fx.features.at(got.post_id)))),
                              enc->encode(join(human_rationale_pieces(*by_id.at(got.post_id)))));
    CHECK(std::abs(got.cosine - cos) <= 1e-9);
    overlap_sum += ov;
    cosine_sum += cos;
  }
  const auto& agg = fx.expected["aggregate_overlap"];
  REQUIRE(r.aggregate_overlap.has_value());
  CHECK(std::abs(*r.aggregate_overlap - agg[0].get<double>() / agg[1].get<double>()) <= 1e-9);
  CHECK(std::abs(*r.aggregate_overlap - overlap_sum / 18.0) <= 1e-9);
  CHECK(std::abs(*r.aggregate_cosine - cosine_sum / 18.0) <= 1e-9);

  for (const auto& id : fx.expected["skipped"]) {
    CHECK(std::none_of(r.per_example.begin(), r.per_example.end(),
                       [&](const auto& e) { return e.post_id == id.get<std::string>(); }));
  }
  const nlohmann::json j = r;
  CHECK(j["n_evaluated"] == 18);
}

TEST_CASE("alignment edge cases") {
  EncoderRegistry reg;
  const auto enc = reg.load({"stub-16", false, 512});
  std::vector<Post> posts(2);
  posts[0].id = "a";
  posts[0].text = "some words here";
  posts[0].human_rationales = std::vector<RationaleSpan>{{1, 2, {"words"}}};
  posts[1].id = "b";
  posts[1].text = "other words";
  posts[1].human_rationales = std::vector<RationaleSpan>{};
  std::map<std::string, FeatureSet> features;
  features["a"].non_hateful = true;
  features["b"].non_hateful = true;
  features["zzz"].rationales = {"unmatched"};

  const auto r = align_corpus(features, posts, *enc);
  CHECK(r.n_evaluated == 0);
  CHECK(r.n_skipped == 2);
  CHECK_FALSE(r.aggregate_overlap.has_value());
  const nlohmann::json j = r;
  CHECK(j["aggregate_overlap"].is_null());

  std::map<std::string, FeatureSet> disjoint;
  disjoint["x"].rationales = {"w"};
  CHECK_THROWS_AS(align_corpus(disjoint, posts, *enc), EmptyIntersection);

  std::map<std::string, FeatureSet> partial;
  partial["a"].rationales = {"words"};
  const auto r2 = align_corpus(partial, posts, *enc);
  REQUIRE(r2.n_evaluated == 1);
  CHECK(r2.n_unmatched == 1);
  CHECK(r2.per_example[0].overlap == 1.0);
}

TEST_CASE("report colors the set intersection purple") {
  const AlignFixture fx;
  EncoderRegistry reg;
  const auto enc = reg.load({"feature-default", false, 512});
  const auto r = align_corpus(fx.features, fx.posts, *enc);
  const std::string html = overlap_report_html(fx.posts, fx.features, r);
  CHECK(html == overlap_report_html(fx.posts, fx.features, r));
  CHECK(html.find("<style>") != std::string::npos);
  CHECK(html.find("<script") == std::string::npos);
  CHECK(html.find("http") == std::string::npos);

  const auto parsed = parse_report(html);
  CHECK(parsed.size() == fx.posts.size());
  for (const auto& want : fx.expected["examples"]) {
    const std::string id = want["id"];
    CAPTURE(id);
    const auto llm = want["llm"].get<std::set<std::string>>();
    const auto hum = want["human"].get<std::set<std::string>>();
    std::set<std::string> inter;
    std::set_intersection(llm.begin(), llm.end(), hum.begin(), hum.end(), std::inserter(inter, inter.end()));
    std::set<std::string> human_only;
    std::set_difference(hum.begin(), hum.end(), llm.begin(), llm.end(),
                        std::inserter(human_only, human_only.end()));
    const auto it = parsed.find(id);
    REQUIRE(it != parsed.end());
    const auto get = [&](const char* cls) {
      const auto c = it->second.find(cls);
      return c == it->second.end() ? std::set<std::string>{} : c->second;
    };
    CHECK(get("both") == inter);
    CHECK(get("human") == human_only);
    for (const auto& w : get("llm")) CHECK((llm.count(w) && !hum.count(w)));
  }
}

TEST_CASE("report on identical, disjoint and human-only rationales") {
  std::vector<Post> posts(3);
  posts[0].id = "same";
  posts[0].text = "go back you vermin";
  posts[0].human_rationales = std::vector<RationaleSpan>{{3, 4, {"vermin"}}};
  posts[1].id = "apart";
  posts[1].text = "those people are vermin";
  posts[1].human_rationales = std::vector<RationaleSpan>{{3, 4, {"vermin"}}};
  posts[2].id = "missed";
  posts[2].text = "aids figures prominently in their lives";
  posts[2].human_rationales = std::vector<RationaleSpan>{{0, 3, {"aids", "figures", "prominently"}}};
  std::map<std::string, FeatureSet> features;
  features["same"].rationales = {"vermin"};
  features["apart"].rationales = {"those people"};
  features["missed"].rationales = {"their lives"};

  EncoderRegistry reg;
  const auto enc = reg.load({"stub-16", false, 512});
  const auto r = align_corpus(features, posts, *enc);
  const auto parsed = parse_report(overlap_report_html(posts, features, r));

  CHECK(parsed.at("same").at("both") == std::set<std::string>{"vermin"});
  CHECK(parsed.at("same").count("llm") == 0);
  CHECK(parsed.at("apart").count("both") == 0);
  CHECK(parsed.at("apart").at("human") == std::set<std::string>{"vermin"});
  CHECK(parsed.at("apart").at("llm") == std::set<std::string>{"people"});
  CHECK(parsed.at("missed").at("human") == std::set<std::string>{"aids", "figures", "prominently"});
  CHECK(parsed.at("missed").at("llm") == std::set<std::string>{"lives"});

  const auto colored = color_tokens(posts[2], &features["missed"]);
  REQUIRE(colored.size() == 6);
  CHECK(colored[0].cls == TokenClass::kHumanOnly);
  CHECK(colored[4].cls == TokenClass::kNone);  // "their" is a stop-word
  CHECK(token_class_name(TokenClass::kBoth) == "both");

  shield::testing::TempDir dir;
  render_overlap_report(posts, features, r, dir / "r.html");
  CHECK(shield::testing::read_file(dir / "r.html") == overlap_report_html(posts, features, r));
  shield::testing::write_file(dir / "blocker", "a file, not a directory");
  CHECK_THROWS_AS(render_overlap_report(posts, features, r, dir / "blocker/r.html"), IoError);
}

}  // TEST_SUITE
