#include "shield/bert_encoder.hpp"
#include "shield/embedding.hpp"
#include "shield/error.hpp"
#include "shield/safetensors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace shield;
using shield::testing::fixture;
using shield::testing::TempDir;

namespace {

FeatureSet features(std::vector<std::string> r, std::vector<std::string> d, std::vector<std::string> c) {
  FeatureSet fs;
  fs.rationales = std::move(r);
  fs.derogatory_language = std::move(d);
  fs.cuss_words = std::move(c);
  fs.non_hateful = !fs.has_features();
  return fs;
}

}  // namespace

TEST_SUITE("embedding") {

TEST_CASE("serialization format") {
  CHECK(serialize_features(features({"black muslims"}, {"black", "muslims"}, {})) ==
        "rationales: black muslims | derogatory: black, muslims | cuss words: none");
  CHECK(serialize_features(features({}, {}, {})) == "non-hateful");
  CHECK(serialize_features(features({"a", "b"}, {}, {"c"})) ==
        "rationales: a; b | derogatory: none | cuss words: c");
}

TEST_CASE("serialization is injective on distinct feature sets") {
  const std::vector<FeatureSet> sets = {
      features({"a"}, {}, {}),      features({}, {"a"}, {}),       features({}, {}, {"a"}),
      features({"a", "b"}, {}, {}), features({"b", "a"}, {}, {}),  features({}, {"a", "b"}, {}),
      features({"a b"}, {}, {}),    features({"x"}, {"y"}, {"z"}), features({}, {}, {}),
      features({"x"}, {"y"}, {}),   features({"x"}, {}, {"y"})};
  std::set<std::string> seen;
  for (const auto& fs : sets) seen.insert(serialize_features(fs));
  CHECK(seen.size() == sets.size());
}

TEST_CASE("stub encoder is deterministic with a fixed width") {
  EncoderRegistry reg;
  const auto enc = reg.load({"stub-8", false, 512});
  CHECK(enc->hidden_size() == 8);
  const auto a = encode_text("same text", *enc);
  const auto b = encode_text("same text", *enc);
  CHECK(a.values == b.values);
  CHECK(a.dim() == 8);
  CHECK(a.role == EmbeddingRole::kTextSide);
  CHECK(encode_text("a very different sentence", *enc).values != a.values);

  const auto again = reg.load({"stub-8", false, 512});
  CHECK(again->parameter_digest() == enc->parameter_digest());
}

TEST_CASE("feature embedding contract") {
  EncoderRegistry reg;
  const auto frozen = reg.load({"feature-default", false, 512});
  const auto nh = encode_features(features({}, {}, {}), *frozen);
  CHECK(nh.role == EmbeddingRole::kFeatureSide);
  CHECK(nh.dim() == frozen->hidden_size());
  CHECK(nh.values == encode_text("non-hateful", *frozen).values);
  CHECK(encode_features(features({"a", "b", "c", "d"}, {"e"}, {}), *frozen).dim() == frozen->hidden_size());

  const auto trainable = reg.load({"feature-default", true, 512});
  CHECK_THROWS_AS(encode_features(features({"a"}, {}, {}), *trainable), RoleError);
  CHECK_THROWS_AS(encode_text("  ", *frozen), EmptyInput);
}

TEST_CASE("registry aliases and failures") {
  EncoderRegistry reg;
  CHECK(reg.resolve("detector-default") == "stub-64");
  CHECK(reg.resolve("alt-encoder") == "stub-48");
  reg.alias("hsd", "bert:" + fixture("tiny_bert").string());
  CHECK(reg.load({"hsd", false, 64})->hidden_size() == 32);
  CHECK_THROWS_AS(reg.load({"no-such-model", false, 512}), EncoderLoadError);
  CHECK_THROWS_AS(reg.load({"stub-x", false, 512}), EncoderLoadError);
  reg.alias("loop-a", "loop-b");
  reg.alias("loop-b", "loop-a");
  CHECK_THROWS_AS(reg.load({"loop-a", false, 512}), EncoderLoadError);
}

TEST_CASE("truncation is safe and deterministic") {
  EncoderRegistry reg;
  const auto enc = reg.load({"stub-16", false, 8});
  std::string long_text;
  for (int i = 0; i < 5000; ++i) long_text += "word" + std::to_string(i % 97) + " ";
  const auto a = encode_text(long_text, *enc);
  CHECK(a.values == encode_text(long_text, *enc).values);
  // Tokens past the limit do not matter.
  CHECK(a.values == encode_text(long_text + " tail tokens here", *enc).values);
}

TEST_CASE("stub encoder gradients match finite differences") {
  HashEncoder enc({"stub-grad", true, 512}, 6, 64);
  const std::string text = "those grubvoles again , really";
  Eigen::VectorXd w(6);
  w << 0.3, -1.2, 0.7, 0.1, -0.4, 0.9;
  auto objective = [&] { return w.dot(enc.encode(text)); };

  for (Tensor* t : enc.parameters()) t->zero_grad();
  ForwardTape tape;
  const Eigen::VectorXd h = enc.forward(text, tape);
  CHECK((h - enc.encode(text)).norm() < 1e-12);
  enc.backward(tape, w);

  const double eps = 1e-6;
  for (Tensor* t : enc.parameters()) {
    for (Eigen::Index i = 0; i < t->value.size(); ++i) {
      const double analytic = t->grad.data()[i];
      const double saved = t->value.data()[i];
      t->value.data()[i] = saved + eps;
      const double up = objective();
      t->value.data()[i] = saved - eps;
      const double down = objective();
      t->value.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      CAPTURE(t->name);
      CHECK(std::abs(analytic - numeric) <= 1e-6 + 1e-5 * std::abs(numeric));
    }
  }
}

TEST_CASE("embedding cache stores float-rounded vectors") {
  TempDir dir;
  EncoderRegistry reg;
  const auto enc = reg.load({"stub-8", false, 512});
  const FeatureSet fs = features({"x"}, {"y"}, {});
  std::vector<double> first;
  {
    FeatureEmbeddingCache cache(dir / "fe.bin", *enc);
    const auto v = cache.get(fs);
    first = v.values;
    for (std::size_t i = 0; i < v.dim(); ++i) {
      CHECK(v.values[i] == static_cast<double>(static_cast<float>(v.values[i])));
    }
    cache.save();
    CHECK(cache.size() == 1);
  }
  FeatureEmbeddingCache reloaded(dir / "fe.bin", *enc);
  CHECK(reloaded.size() == 1);
  CHECK(reloaded.get(fs).values == first);

  const auto other = reg.load({"stub-16", false, 512});
  FeatureEmbeddingCache foreign(dir / "fe.bin", *other);
  CHECK(foreign.size() == 0);
}

TEST_CASE("safetensors loading") {
  const auto st = SafeTensors::load(fixture("tiny_bert/model.safetensors"));
  CHECK(st.contains("embeddings.word_embeddings.weight"));
  CHECK(st.at("embeddings.word_embeddings.weight").cols() == 32);
  CHECK(st.at("embeddings.LayerNorm.weight").rows() == 1);
  CHECK_THROWS(st.at("no.such.tensor"));

  TempDir dir;
  shield::testing::write_file(dir / "bad.safetensors", std::string("\x05\x00\x00\x00\x00\x00\x00\x00{", 9));
  CHECK_THROWS_AS(SafeTensors::load(dir / "bad.safetensors"), EncoderLoadError);
}

TEST_CASE("BERT encoder matches the reference implementation") {
  const auto expected = shield::testing::read_json(fixture("tiny_bert/expected.json"));
  const std::size_t max_tokens = expected["max_tokens"];
  BertEncoder enc({"tiny", false, max_tokens}, fixture("tiny_bert"));
  CHECK(enc.hidden_size() == 32);
  CHECK(read_bert_config(fixture("tiny_bert")).hidden_size == 32);
  for (const auto& c : expected["cases"]) {
    const std::string text = c["text"];
    CAPTURE(text);
    CHECK(enc.token_ids(text) == c["input_ids"].get<std::vector<int>>());
    const auto ref = c["cls"].get<std::vector<double>>();
    const Eigen::VectorXd got = enc.encode(text);
    REQUIRE(static_cast<std::size_t>(got.size()) == ref.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      worst = std::max(worst, std::abs(got(static_cast<Eigen::Index>(i)) - ref[i]));
    }
    CHECK(worst < 1e-4);
  }
  const auto clone = enc.clone();
  CHECK(clone->parameter_digest() == enc.parameter_digest());
  CHECK_FALSE(enc.supports_training());
}

TEST_CASE("BERT loader rejects foreign checkpoints") {
  TempDir dir;
  shield::testing::write_file(dir / "config.json", R"({"model_type": "roberta", "vocab_size": 10,
      "hidden_size": 8, "num_hidden_layers": 1, "num_attention_heads": 2,
      "intermediate_size": 16, "max_position_embeddings": 16})");
  CHECK_THROWS_AS(read_bert_config(dir.path()), EncoderLoadError);
  CHECK_THROWS_AS(BertEncoder({"x", false, 16}, dir / "missing"), EncoderLoadError);
}

}  // TEST_SUITE
