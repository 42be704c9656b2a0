#include "shield/bert_encoder.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace shield {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EncoderLoadError("cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw EncoderLoadError("invalid JSON in " + path.string());
  return j;
}

using RowVecF = Eigen::RowVectorXf;

void layer_norm(RowMatrixF& x, const RowVecF& w, const RowVecF& b, float eps) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const float mean = row.mean();
    const float var = (row.array() - mean).square().mean();
    row = (((row.array() - mean) / std::sqrt(var + eps)) * w.array() + b.array()).matrix();
  }
}

RowMatrixF linear(const RowMatrixF& x, const RowMatrixF& w, const RowVecF& b) {
  RowMatrixF y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

}  // namespace

struct BertEncoder::Weights {
  struct Layer {
    RowMatrixF q_w, k_w, v_w, ao_w, i_w, o_w;
    RowVecF q_b, k_b, v_b, ao_b, ao_ln_w, ao_ln_b, i_b, o_b, o_ln_w, o_ln_b;
  };
  RowMatrixF word, position, token_type;
  RowVecF ln_w, ln_b;
  std::vector<Layer> layers;
};

BertConfig read_bert_config(const std::filesystem::path& dir) {
  const auto j = read_json(dir / "config.json");
  BertConfig c;
  try {
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.num_layers = j.at("num_hidden_layers").get<std::size_t>();
    c.num_heads = j.at("num_attention_heads").get<std::size_t>();
    c.intermediate_size = j.at("intermediate_size").get<std::size_t>();
    c.max_position_embeddings = j.at("max_position_embeddings").get<std::size_t>();
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-12);
  } catch (const nlohmann::json::exception& e) {
    throw EncoderLoadError("incomplete BERT config in " + dir.string() + ": " + e.what());
  }
  if (j.value("model_type", std::string("bert")) != "bert") {
    throw EncoderLoadError("only BERT checkpoints are supported, found model_type '" +
                           j.value("model_type", std::string()) + "'");
  }
  if (j.value("hidden_act", std::string("gelu")) != "gelu") {
    throw EncoderLoadError("unsupported hidden_act in " + dir.string());
  }
  if (c.num_heads == 0 || c.hidden_size % c.num_heads != 0) {
    throw EncoderLoadError("hidden_size not divisible by num_attention_heads");
  }
  return c;
}

BertEncoder::BertEncoder(EncoderSpec spec, const std::filesystem::path& dir)
    : Encoder(std::move(spec)), config_(read_bert_config(dir)) {
  bool lowercase = true;
  if (std::filesystem::exists(dir / "tokenizer_config.json")) {
    lowercase = read_json(dir / "tokenizer_config.json").value("do_lower_case", true);
  }
  tokenizer_ = std::make_shared<WordPieceTokenizer>(
      WordPieceTokenizer::from_vocab_file(dir / "vocab.txt", lowercase));

  const auto st_path = dir / "model.safetensors";
  const SafeTensors st = SafeTensors::load(st_path);
  const std::string prefix = st.contains("bert.embeddings.word_embeddings.weight") ? "bert." : "";
  auto mat = [&](const std::string& name) -> const RowMatrixF& { return st.at(prefix + name); };
  auto vec = [&](const std::string& name) -> RowVecF { return st.at(prefix + name).row(0); };
  // Older checkpoints name LayerNorm parameters gamma/beta.
  auto ln = [&](const std::string& base, RowVecF& w, RowVecF& b) {
    if (st.contains(prefix + base + ".weight")) {
      w = vec(base + ".weight");
      b = vec(base + ".bias");
    } else {
      w = vec(base + ".gamma");
      b = vec(base + ".beta");
    }
  };

  auto w = std::make_shared<Weights>();
  w->word = mat("embeddings.word_embeddings.weight");
  w->position = mat("embeddings.position_embeddings.weight");
  w->token_type = mat("embeddings.token_type_embeddings.weight");
  ln("embeddings.LayerNorm", w->ln_w, w->ln_b);
  const auto h = static_cast<Eigen::Index>(config_.hidden_size);
  if (w->word.cols() != h || w->word.rows() != static_cast<Eigen::Index>(config_.vocab_size)) {
    throw EncoderLoadError("word embedding shape disagrees with config.json");
  }
  if (tokenizer_->vocab_size() > config_.vocab_size) {
    throw EncoderLoadError("vocab.txt is larger than the embedding table");
  }
  for (std::size_t i = 0; i < config_.num_layers; ++i) {
    const std::string p = "encoder.layer." + std::to_string(i) + ".";
    Weights::Layer L;
    L.q_w = mat(p + "attention.self.query.weight");
    L.q_b = vec(p + "attention.self.query.bias");
    L.k_w = mat(p + "attention.self.key.weight");
    L.k_b = vec(p + "attention.self.key.bias");
    L.v_w = mat(p + "attention.self.value.weight");
    L.v_b = vec(p + "attention.self.value.bias");
    L.ao_w = mat(p + "attention.output.dense.weight");
    L.ao_b = vec(p + "attention.output.dense.bias");
    ln(p + "attention.output.LayerNorm", L.ao_ln_w, L.ao_ln_b);
    L.i_w = mat(p + "intermediate.dense.weight");
    L.i_b = vec(p + "intermediate.dense.bias");
    L.o_w = mat(p + "output.dense.weight");
    L.o_b = vec(p + "output.dense.bias");
    ln(p + "output.LayerNorm", L.o_ln_w, L.o_ln_b);
    w->layers.push_back(std::move(L));
  }
  weights_ = std::move(w);

  std::ifstream raw(st_path, std::ios::binary);
  std::ostringstream bytes;
  bytes << raw.rdbuf();
  digest_ = text::sha256_hex(bytes.str());
}

std::unique_ptr<Encoder> BertEncoder::clone() const { return std::make_unique<BertEncoder>(*this); }

std::vector<int> BertEncoder::token_ids(std::string_view s) const {
  const std::size_t limit = std::min(spec_.max_tokens, config_.max_position_embeddings);
  return tokenizer_->encode(s, limit);
}

Eigen::VectorXd BertEncoder::encode(std::string_view s) const { return encode_ids(token_ids(s)); }

Eigen::VectorXd BertEncoder::encode_ids(const std::vector<int>& ids) const {
  const Weights& w = *weights_;
  const auto n = static_cast<Eigen::Index>(ids.size());
  const auto H = static_cast<Eigen::Index>(config_.hidden_size);
  const auto heads = static_cast<Eigen::Index>(config_.num_heads);
  const Eigen::Index dh = H / heads;
  const float eps = static_cast<float>(config_.layer_norm_eps);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  if (n > w.position.rows()) throw TokenizationError("sequence longer than position table");
  RowMatrixF x(n, H);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= w.word.rows()) throw TokenizationError("token id out of range");
    x.row(t) = w.word.row(id) + w.position.row(t) + w.token_type.row(0);
  }
  layer_norm(x, w.ln_w, w.ln_b, eps);

  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const auto& L = w.layers[li];
    // The last layer only needs the [CLS] row.
    const bool last = li + 1 == w.layers.size();
    const Eigen::Index q_rows = last ? 1 : n;
    const RowMatrixF q = linear(x.topRows(q_rows), L.q_w, L.q_b);
    const RowMatrixF k = linear(x, L.k_w, L.k_b);
    const RowMatrixF v = linear(x, L.v_w, L.v_b);
    RowMatrixF ctx(q_rows, H);
    for (Eigen::Index h = 0; h < heads; ++h) {
      RowMatrixF scores = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        auto row = scores.row(r);
        const float mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
      }
      ctx.middleCols(h * dh, dh) = scores * v.middleCols(h * dh, dh);
    }
    RowMatrixF a = linear(ctx, L.ao_w, L.ao_b) + x.topRows(q_rows);
    layer_norm(a, L.ao_ln_w, L.ao_ln_b, eps);
    RowMatrixF inter = linear(a, L.i_w, L.i_b);
    inter = inter.unaryExpr([](float z) { return 0.5f * z * (1.0f + std::erf(z * 0.70710678f)); });
    RowMatrixF out = linear(inter, L.o_w, L.o_b) + a;
    layer_norm(out, L.o_ln_w, L.o_ln_b, eps);
    x = std::move(out);
  }
  return x.row(0).transpose().cast<double>();
}

}  // namespace shield
