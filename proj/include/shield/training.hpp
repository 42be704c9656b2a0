#pragma once

#include "shield/datasets.hpp"
#include "shield/embedding.hpp"
#include "shield/feature_set.hpp"
#include "shield/fusion.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shield {

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t batch_size = 16;
  std::size_t epochs = 3;
  std::uint64_t seed = 13;
  double decision_threshold = 0.5;
  std::size_t hidden_dim = 256;
  std::size_t max_steps = 0;  // 0: no cap

  // ConfigError naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// The trainable text-side encoder, the frozen feature-side encoder and the
/// fusion head.
class ShieldModel {
 public:
  ShieldModel(std::unique_ptr<Encoder> text_encoder, std::unique_ptr<Encoder> feature_encoder,
              FusionHead head, double decision_threshold);
  ShieldModel(const ShieldModel& other);
  ShieldModel& operator=(const ShieldModel& other);
  ShieldModel(ShieldModel&&) noexcept = default;
  ShieldModel& operator=(ShieldModel&&) noexcept = default;

  Prediction predict(std::string_view text, const FeatureSet& features) const;
  Prediction predict(const EmbeddingVector& text_side, const EmbeddingVector& feature_side) const;

  const Encoder& text_encoder() const { return *text_encoder_; }
  Encoder& text_encoder() { return *text_encoder_; }
  const Encoder& feature_encoder() const { return *feature_encoder_; }
  const FusionHead& head() const { return head_; }
  FusionHead& head() { return head_; }
  double decision_threshold() const { return threshold_; }

  // True when the text encoder exposes gradients and is marked trainable.
  bool text_encoder_trainable() const;

 private:
  std::unique_ptr<Encoder> text_encoder_;
  std::unique_ptr<Encoder> feature_encoder_;
  FusionHead head_;
  double threshold_;
};

// Loads both encoders through the registry, freezes the feature side and
// initializes the head from config.seed.
ShieldModel make_model(const EncoderRegistry& registry, const EncoderSpec& text_spec,
                       const EncoderSpec& feature_spec, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
  std::size_t steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::filesystem::path best_checkpoint;
  std::size_t best_epoch = 0;  // 0: the initial model was never beaten
  std::optional<double> best_val_accuracy;
  std::string feature_encoder_digest_before;
  std::string feature_encoder_digest_after;
  bool text_encoder_trained = false;
  std::size_t steps = 0;
};

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoint written
  std::filesystem::path metrics_log;     // empty: no metrics log
  FeatureEmbeddingCache* feature_cache = nullptr;
  std::vector<std::string> encoder_names;  // recorded in the checkpoint
};

struct TrainResult {
  ShieldModel model;
  TrainReport report;
};

/// Jointly optimizes the text encoder (when trainable) and the head with
/// AdamW on mean BCE; the feature encoder is never updated. The model with
/// the best validation accuracy (including the initial one) is returned.
/// MissingFeatures if any post lacks a FeatureSet; DivergenceError when a
/// batch loss is non-finite.
TrainResult train(std::span<const Post> train_posts, std::span<const Post> val_posts,
                  const std::map<std::string, FeatureSet>& features, ShieldModel model,
                  const TrainConfig& config, const TrainOptions& options = {});

/// Fraction of posts whose predicted label equals the gold label.
double evaluate_accuracy(const ShieldModel& model, std::span<const Post> posts,
                         const std::map<std::string, FeatureSet>& features,
                         FeatureEmbeddingCache* feature_cache = nullptr);

// Checkpoint directory: manifest.json + weights.bin.
struct CheckpointInfo {
  TrainConfig config;
  std::string text_encoder;
  std::string feature_encoder;
  std::string feature_encoder_digest;
  std::size_t max_tokens = 512;
};

void save_checkpoint(const std::filesystem::path& dir, const ShieldModel& model,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  ShieldModel model;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const EncoderRegistry& registry);

}  // namespace shield
