#pragma once

#include "shield/feature_set.hpp"
#include "shield/tensor.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace shield {

enum class EmbeddingRole { kTextSide, kFeatureSide };

std::string_view role_name(EmbeddingRole role);

/// A pooled encoder output tagged with the side of the model it came from.
struct EmbeddingVector {
  std::vector<double> values;
  EmbeddingRole role = EmbeddingRole::kTextSide;

  std::size_t dim() const { return values.size(); }
};

struct EncoderSpec {
  std::string name;
  bool trainable = true;
  std::size_t max_tokens = 512;
};

/// Text encoder pooled at the first ([CLS]) position of its last layer.
class Encoder {
 public:
  explicit Encoder(EncoderSpec spec) : spec_(std::move(spec)) {}
  virtual ~Encoder() = default;

  const EncoderSpec& spec() const { return spec_; }
  virtual std::size_t hidden_size() const = 0;

  // Inference-mode encoding; deterministic and thread-safe.
  virtual Eigen::VectorXd encode(std::string_view text) const = 0;

  // SHA-256 of every parameter; equal digests mean identical weights.
  virtual std::string parameter_digest() const = 0;

  virtual std::unique_ptr<Encoder> clone() const = 0;

  // Encoders that can be fine-tuned return their parameters here.
  virtual bool supports_training() const { return false; }

  void freeze() { spec_.trainable = false; }

 protected:
  EncoderSpec spec_;
};

/// Intermediate values of one training-mode forward pass.
struct ForwardTape {
  std::vector<std::size_t> rows;  // embedding rows read
  Eigen::VectorXd mixed;          // input to the output projection
  Eigen::VectorXd hidden;         // pooled output
};

/// Encoder whose parameters can receive gradients from the fusion head.
class TrainableEncoder : public Encoder {
 public:
  using Encoder::Encoder;

  bool supports_training() const override { return true; }

  virtual Eigen::VectorXd forward(std::string_view text, ForwardTape& tape) const = 0;
  // Accumulates parameter gradients for d(loss)/d(output) = grad_out.
  virtual void backward(const ForwardTape& tape, const Eigen::VectorXd& grad_out) = 0;
  virtual TensorRefs parameters() = 0;
  virtual std::vector<const Tensor*> parameters() const = 0;
};

/// Deterministic stand-in encoder.
///
/// Tokens (lowercased alphanumeric runs and single punctuation marks) are
/// hashed into a fixed number of embedding rows. The [CLS] position mixes a
/// learned CLS vector with the mean token embedding and applies
/// tanh(W x + b). Initial weights are a pure function of the encoder name.
class HashEncoder final : public TrainableEncoder {
 public:
  HashEncoder(EncoderSpec spec, std::size_t dim, std::size_t buckets = 2048);

  std::size_t hidden_size() const override { return dim_; }
  Eigen::VectorXd encode(std::string_view text) const override;
  std::string parameter_digest() const override;
  std::unique_ptr<Encoder> clone() const override;

  Eigen::VectorXd forward(std::string_view text, ForwardTape& tape) const override;
  void backward(const ForwardTape& tape, const Eigen::VectorXd& grad_out) override;
  TensorRefs parameters() override;
  std::vector<const Tensor*> parameters() const override;

  std::size_t buckets() const { return buckets_; }
  std::vector<std::size_t> token_rows(std::string_view text) const;

 private:
  std::size_t dim_;
  std::size_t buckets_;
  Tensor embed_;  // buckets x dim
  Tensor cls_;    // dim x 1
  Tensor proj_;   // dim x dim
  Tensor bias_;   // dim x 1
};

// Lowercased alphanumeric runs and single ASCII punctuation marks; bytes
// >= 0x80 count as alphanumeric.
std::vector<std::string> stub_tokenize(std::string_view text);

/// Resolves encoder names. Built-in forms:
///   "stub-<dim>"      HashEncoder with the given width
///   "bert:<dir>"      BERT checkpoint directory (config.json, vocab.txt,
///                     model.safetensors), inference only
///   "<dir>"           same as "bert:<dir>" when the directory exists
/// Aliases map a name to one of these forms (e.g. "detector-default").
class EncoderRegistry {
 public:
  EncoderRegistry();

  void alias(std::string name, std::string target);
  std::string resolve(const std::string& name) const;

  // EncoderLoadError when the name cannot be resolved or loaded.
  std::unique_ptr<Encoder> load(const EncoderSpec& spec) const;

 private:
  std::map<std::string, std::string> aliases_;
};

/// encode_text for the detector side. EmptyInput on blank text.
EmbeddingVector encode_text(std::string_view text, const Encoder& encoder);

/// Category-marked single-string form of a FeatureSet:
/// `rationales: r1; r2 | derogatory: d1, d2 | cuss words: c1`, with `none`
/// for empty categories; non-hateful sets become `non-hateful`.
std::string serialize_features(const FeatureSet& fs);

/// Frozen feature-side embedding of serialize_features(fs). RoleError if
/// the encoder is marked trainable.
EmbeddingVector encode_features(const FeatureSet& fs, const Encoder& encoder);

/// Optional float32 store of feature-side embeddings, keyed by feature
/// digest and tied to one encoder's parameter digest. Values handed out are
/// always float-rounded, whether they came from disk or were just computed.
/// The cache keeps its own copy of the encoder.
class FeatureEmbeddingCache {
 public:
  FeatureEmbeddingCache(std::filesystem::path path, const Encoder& encoder);

  EmbeddingVector get(const FeatureSet& fs);
  void save() const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  std::unique_ptr<Encoder> encoder_;  // private copy, frozen
  std::string encoder_digest_;
  std::map<std::string, std::vector<float>> entries_;
  mutable std::mutex mutex_;
};

}  // namespace shield
