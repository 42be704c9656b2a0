#pragma once

#include "shield/embedding.hpp"
#include "shield/safetensors.hpp"
#include "shield/wordpiece.hpp"

#include <filesystem>
#include <memory>

namespace shield {

struct BertConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_size = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t intermediate_size = 0;
  std::size_t max_position_embeddings = 0;
  double layer_norm_eps = 1e-12;
};

// Reads config.json of a HuggingFace BERT checkpoint directory.
BertConfig read_bert_config(const std::filesystem::path& dir);

/// Inference-only BERT encoder loaded from a HuggingFace checkpoint
/// directory (config.json, vocab.txt, model.safetensors). Returns the last
/// hidden state at [CLS]. Weights stay in float32.
class BertEncoder final : public Encoder {
 public:
  BertEncoder(EncoderSpec spec, const std::filesystem::path& dir);

  std::size_t hidden_size() const override { return config_.hidden_size; }
  Eigen::VectorXd encode(std::string_view text) const override;
  std::string parameter_digest() const override { return digest_; }
  std::unique_ptr<Encoder> clone() const override;

  const BertConfig& config() const { return config_; }
  std::vector<int> token_ids(std::string_view text) const;
  Eigen::VectorXd encode_ids(const std::vector<int>& ids) const;

 private:
  struct Weights;

  BertConfig config_;
  std::shared_ptr<const WordPieceTokenizer> tokenizer_;
  std::shared_ptr<const Weights> weights_;
  std::string digest_;
};

}  // namespace shield
