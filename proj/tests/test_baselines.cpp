#include "shield/baselines.hpp"
#include "shield/error.hpp"
#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace shield;
using shield::testing::fixture;

namespace {

const char* kTwitterSample =
    "always thought it astounding no policing agency dares do this to the armed muslim compounds "
    "all over the country";

const Exemplar kExemplar{"those newcomers are grubvoles", 1};

Post post(std::string id, std::string text, int label) {
  Post p;
  p.id = std::move(id);
  p.text = std::move(text);
  p.label = label;
  return p;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("prompt layout") {
  const std::string p = build_oneshot_prompt(kTwitterSample, kExemplar);
  CHECK(p.starts_with(
      "You are a hate speech detection bot. Given a text, respond with the classification label "
      "towards given text with either hateful labeled as 1 or non-hateful labeled as 0. Note: It is "
      "essential to give classification for all the texts."));
  CHECK(p.ends_with(std::string("\nText: \"") + kTwitterSample + "\"\nLabel:"));
  CHECK(p.find("Text: \"those newcomers are grubvoles\"\nLabel: 1\n") != std::string::npos);
  CHECK(p == build_oneshot_prompt(kTwitterSample, kExemplar));
  CHECK(kOneShotPromptVersion == "v1");
  CHECK_THROWS_AS(build_oneshot_prompt("  ", kExemplar), EmptyInput);
  CHECK_THROWS_AS(build_oneshot_prompt("x", Exemplar{"", 0}), EmptyInput);
}

TEST_CASE("label parsing") {
  CHECK(parse_oneshot_label("1") == 1);
  CHECK(parse_oneshot_label("0") == 0);
  CHECK(parse_oneshot_label(" 1\n") == 1);
  CHECK(parse_oneshot_label("Label: 0") == 0);
  CHECK(parse_oneshot_label("The label is 1.") == 1);
  CHECK(parse_oneshot_label("\"1\"") == 1);
  CHECK(parse_oneshot_label("1 (hateful). Final answer: 1") == 1);
  CHECK_FALSE(parse_oneshot_label("10").has_value());
  CHECK_FALSE(parse_oneshot_label("0.5").has_value());
  CHECK_FALSE(parse_oneshot_label("1,000").has_value());
  CHECK_FALSE(parse_oneshot_label("+1").has_value());
  CHECK_FALSE(parse_oneshot_label("label1").has_value());
}

TEST_CASE("refusals and ambiguous replies abstain") {
  const auto replies = shield::testing::read_json(fixture("oneshot_refusals.json"))["replies"];
  REQUIRE(replies.size() >= 15);
  std::size_t abstained = 0;
  for (const auto& r : replies) {
    const std::string reply = r.get<std::string>();
    CAPTURE(reply);
    const bool none = !parse_oneshot_label(reply).has_value();
    CHECK(none);
    abstained += none;
  }
  CHECK(abstained == replies.size());

  std::mt19937 gen(8);
  const std::string alphabet = "abcXYZ 23456789.,:;-+!?\n\"'";
  for (int i = 0; i < 3000; ++i) {
    std::string s(gen() % 60, ' ');
    for (char& c : s) c = alphabet[gen() % alphabet.size()];
    CHECK_FALSE(parse_oneshot_label(s).has_value());
  }
}

TEST_CASE("single post classification through replay") {
  ReplayLlmClient hit("gpt-3.5-turbo-0613");
  hit.add(LlmTask::kOneShot, kTwitterSample, "1");
  const Post p = post("tw-1", kTwitterSample, 1);
  const auto r = classify_oneshot(p, hit, kExemplar);
  CHECK(r.label == 1);
  CHECK(r.raw_output == "1");
  CHECK_FALSE(r.abstained());

  ReplayLlmClient miss("gpt-3.5-turbo-0613");
  miss.add(LlmTask::kOneShot, kTwitterSample, "0");
  CHECK(classify_oneshot(p, miss, kExemplar).label == 0);

  ReplayLlmClient refuse("gpt-3.5-turbo-0613");
  refuse.add(LlmTask::kOneShot, kTwitterSample, "I cannot classify this content.");
  CHECK(classify_oneshot(p, refuse, kExemplar).abstained());
}

TEST_CASE("corpus evaluation") {
  const std::vector<Post> posts = {post("d", "fourth text", 0), post("a", "first text", 1),
                                   post("c", "third text", 0), post("b", "second text", 1)};
  ReplayLlmClient client("gpt-3.5-turbo-0613");
  client.add(LlmTask::kOneShot, "first text", "1");
  client.add(LlmTask::kOneShot, "second text", "0");
  client.add(LlmTask::kOneShot, "third text", "0");
  client.add(LlmTask::kOneShot, "fourth text", "Label: 0");
  OneShotOptions o;
  o.exemplar = kExemplar;
  o.parallelism = 3;
  const auto eval = evaluate_oneshot(posts, client, o);
  CHECK(eval.n_correct == 3);
  CHECK(eval.n_abstain == 0);
  CHECK(eval.accuracy() == doctest::Approx(0.75));
  CHECK(eval.strict_accuracy == doctest::Approx(0.75));
  REQUIRE(eval.results.size() == 4);
  CHECK(eval.results[0].post_id == "a");
  CHECK(eval.results[3].post_id == "d");
  CHECK(client.calls() == 4);

  ReplayLlmClient mixed("m");
  mixed.add(LlmTask::kOneShot, "first text", "1");
  mixed.add(LlmTask::kOneShot, "second text", "no idea");
  mixed.add(LlmTask::kOneShot, "third text", "1");
  mixed.add(LlmTask::kOneShot, "fourth text", "0");
  const auto m = evaluate_oneshot(posts, mixed, o);
  CHECK(m.n_abstain == 1);
  CHECK(*m.lenient_accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(m.strict_accuracy == doctest::Approx(0.5));
  CHECK(m.abstain_rate == doctest::Approx(0.25));
  o.strict = true;
  CHECK(*evaluate_oneshot(posts, mixed, o).accuracy() == doctest::Approx(0.5));

  const auto summary = oneshot_summary(m, mixed);
  CHECK(summary["prompt_version"] == "v1");
  CHECK(summary["n_abstain"] == 1);
}

TEST_CASE("all-abstain and empty corpora") {
  const std::vector<Post> posts = {post("a", "first text", 1), post("b", "second text", 0)};
  ReplayLlmClient client("m");
  client.add(LlmTask::kOneShot, "first text", "I cannot help with that.");
  client.add(LlmTask::kOneShot, "second text", "");
  OneShotOptions o;
  o.exemplar = kExemplar;
  const auto eval = evaluate_oneshot(posts, client, o);
  CHECK(eval.n_abstain == 2);
  CHECK_FALSE(eval.lenient_accuracy.has_value());
  CHECK_FALSE(eval.accuracy().has_value());
  CHECK(eval.strict_accuracy == 0.0);
  CHECK(oneshot_summary(eval, client)["accuracy"].is_null());
  CHECK_THROWS_AS(evaluate_oneshot(std::span<const Post>{}, client, o), EmptyDataset);

  shield::testing::TempDir dir;
  write_oneshot_results(dir / "r.jsonl", eval);
  const std::string first = shield::testing::read_file(dir / "r.jsonl");
  CHECK(first.find("\"label\":null") != std::string::npos);
  CHECK(first.find("latency") == std::string::npos);
  write_oneshot_results(dir / "r.jsonl", evaluate_oneshot(posts, client, o));
  CHECK(shield::testing::read_file(dir / "r.jsonl") == first);
}

TEST_CASE("lexicon mock answers one-shot requests") {
  Lexicon lex;
  lex["grubvoles"] = FeatureCategory::kDerogatory;
  LexiconMockClient client(lex);
  OneShotOptions o;
  o.exemplar = kExemplar;
  const std::vector<Post> posts = {post("a", "the grubvoles are back", 1), post("b", "nice weather", 0)};
  CHECK(*evaluate_oneshot(posts, client, o).accuracy() == 1.0);
}

}  // TEST_SUITE
