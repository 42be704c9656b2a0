#include "shield/training.hpp"

#include "shield/error.hpp"
#include "shield/rng.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

namespace shield {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size");
  if (hidden_dim < 1) throw ConfigError("train.hidden_dim");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw ConfigError("train.decision_threshold");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
                     {"batch_size", c.batch_size},       {"epochs", c.epochs},
                     {"seed", c.seed},                   {"decision_threshold", c.decision_threshold},
                     {"hidden_dim", c.hidden_dim},       {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.seed = j.value("seed", d.seed);
  c.decision_threshold = j.value("decision_threshold", d.decision_threshold);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.max_steps = j.value("max_steps", d.max_steps);
}

// ---------------------------------------------------------------------------

ShieldModel::ShieldModel(std::unique_ptr<Encoder> text_encoder,
                         std::unique_ptr<Encoder> feature_encoder, FusionHead head,
                         double decision_threshold)
    : text_encoder_(std::move(text_encoder)),
      feature_encoder_(std::move(feature_encoder)),
      head_(std::move(head)),
      threshold_(decision_threshold) {
  feature_encoder_->freeze();
  const auto expected = text_encoder_->hidden_size() + feature_encoder_->hidden_size();
  if (head_.input_dim() != expected) {
    throw DimMismatch("head input " + std::to_string(head_.input_dim()) + " != encoder dims " +
                      std::to_string(expected));
  }
}

ShieldModel::ShieldModel(const ShieldModel& other)
    : text_encoder_(other.text_encoder_->clone()),
      feature_encoder_(other.feature_encoder_->clone()),
      head_(other.head_),
      threshold_(other.threshold_) {}

ShieldModel& ShieldModel::operator=(const ShieldModel& other) {
  if (this != &other) {
    ShieldModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

bool ShieldModel::text_encoder_trainable() const {
  return text_encoder_->spec().trainable && text_encoder_->supports_training();
}

Prediction ShieldModel::predict(const EmbeddingVector& text_side,
                                const EmbeddingVector& feature_side) const {
  const auto combined = fuse_embeddings(text_side, feature_side);
  return classify(combined, head_, threshold_);
}

Prediction ShieldModel::predict(std::string_view text, const FeatureSet& features) const {
  return predict(encode_text(text, *text_encoder_), encode_features(features, *feature_encoder_));
}

ShieldModel make_model(const EncoderRegistry& registry, const EncoderSpec& text_spec,
                       const EncoderSpec& feature_spec, const TrainConfig& config) {
  auto text = registry.load(text_spec);
  EncoderSpec fe = feature_spec;
  fe.trainable = false;
  auto feature = registry.load(fe);
  FusionHead head(text->hidden_size() + feature->hidden_size(), config.hidden_dim, config.seed);
  return ShieldModel(std::move(text), std::move(feature), std::move(head),
                     config.decision_threshold);
}

// ---------------------------------------------------------------------------

namespace {

const FeatureSet& features_of(const Post& p, const std::map<std::string, FeatureSet>& features) {
  return features.at(p.id);
}

void require_features(std::span<const Post> posts,
                      const std::map<std::string, FeatureSet>& features) {
  std::vector<std::string> missing;
  for (const auto& p : posts) {
    if (!features.count(p.id)) missing.push_back(p.id);
  }
  if (missing.empty()) return;
  std::string msg = std::to_string(missing.size()) + " posts without features:";
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
  if (missing.size() > 10) msg += " ...";
  throw MissingFeatures(msg);
}

EmbeddingVector feature_embedding(const FeatureSet& fs, const Encoder& encoder,
                                  FeatureEmbeddingCache* cache) {
  return cache ? cache->get(fs) : encode_features(fs, encoder);
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

double evaluate_accuracy(const ShieldModel& model, std::span<const Post> posts,
                         const std::map<std::string, FeatureSet>& features,
                         FeatureEmbeddingCache* feature_cache) {
  if (posts.empty()) throw EmptyDataset("cannot evaluate on zero posts");
  require_features(posts, features);
  std::size_t correct = 0;
  for (const auto& p : posts) {
    const auto text_side = encode_text(p.text, model.text_encoder());
    const auto feat_side = feature_embedding(features_of(p, features), model.feature_encoder(),
                                             feature_cache);
    if (model.predict(text_side, feat_side).label == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(posts.size());
}

TrainResult train(std::span<const Post> train_posts, std::span<const Post> val_posts,
                  const std::map<std::string, FeatureSet>& features, ShieldModel model,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  require_features(train_posts, features);
  require_features(val_posts, features);

  TrainReport report;
  report.feature_encoder_digest_before = model.feature_encoder().parameter_digest();
  const bool train_text = model.text_encoder_trainable();
  report.text_encoder_trained = train_text;

  // Frozen sides are encoded once up front.
  std::vector<Eigen::VectorXd> feat_cache;
  std::vector<Eigen::VectorXd> text_cache;
  feat_cache.reserve(train_posts.size());
  for (const auto& p : train_posts) {
    feat_cache.push_back(to_eigen(
        feature_embedding(features_of(p, features), model.feature_encoder(), options.feature_cache)
            .values));
    if (!train_text) text_cache.push_back(to_eigen(encode_text(p.text, model.text_encoder()).values));
  }

  TensorRefs params = model.head().parameters();
  TrainableEncoder* text_encoder = nullptr;
  if (train_text) {
    text_encoder = dynamic_cast<TrainableEncoder*>(&model.text_encoder());
    for (Tensor* t : text_encoder->parameters()) params.push_back(t);
  }
  AdamWOptions opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  AdamW optimizer(params, opt);

  std::optional<ShieldModel> best;
  auto consider = [&](std::size_t epoch, std::optional<double> acc) {
    const bool better = !best || (acc && (!report.best_val_accuracy || *acc > *report.best_val_accuracy)) ||
                        (!acc && epoch > report.best_epoch);
    if (!better) return;
    best = model;
    report.best_epoch = epoch;
    report.best_val_accuracy = acc;
    if (!options.checkpoint_dir.empty()) {
      CheckpointInfo info;
      info.config = config;
      if (options.encoder_names.size() == 2) {
        info.text_encoder = options.encoder_names[0];
        info.feature_encoder = options.encoder_names[1];
      } else {
        info.text_encoder = model.text_encoder().spec().name;
        info.feature_encoder = model.feature_encoder().spec().name;
      }
      info.feature_encoder_digest = report.feature_encoder_digest_before;
      info.max_tokens = model.text_encoder().spec().max_tokens;
      save_checkpoint(options.checkpoint_dir, model, info);
      report.best_checkpoint = options.checkpoint_dir;
    }
  };
  auto val_accuracy = [&]() -> std::optional<double> {
    if (val_posts.empty()) return std::nullopt;
    return evaluate_accuracy(model, val_posts, features, options.feature_cache);
  };

  std::ofstream metrics;
  if (!options.metrics_log.empty()) {
    metrics.open(options.metrics_log, std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics log " + options.metrics_log.string());
  }

  consider(0, val_accuracy());

  Rng rng(config.seed ^ 0x5eed5eed5eedULL);
  std::vector<std::size_t> order(train_posts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t dt = model.text_encoder().hidden_size();
  bool step_cap_hit = false;

  for (std::size_t epoch = 1; epoch <= config.epochs && !step_cap_hit; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      if (config.max_steps && report.steps >= config.max_steps) {
        step_cap_hit = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_n = 1.0 / static_cast<double>(end - start);
      optimizer.zero_grad();
      std::vector<double> probs;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Post& post = train_posts[i];
        ForwardTape tape;
        const Eigen::VectorXd t =
            train_text ? text_encoder->forward(post.text, tape) : text_cache[i];
        Eigen::VectorXd x(t.size() + feat_cache[i].size());
        x << t, feat_cache[i];
        FusionHead::Activations acts;
        const double p = sigmoid(model.head().forward(x, &acts));
        probs.push_back(p);
        labels.push_back(post.label);
        // d(mean BCE)/d(logit) = (p - y) / n
        const Eigen::VectorXd g_in = model.head().backward(acts, (p - post.label) * inv_n);
        if (train_text) text_encoder->backward(tape, g_in.head(static_cast<Eigen::Index>(dt)));
      }
      const double loss = bce_loss(probs, labels);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(report.steps + 1));
      }
      optimizer.step();
      ++report.steps;
      loss_sum += loss * static_cast<double>(end - start);
      seen += end - start;
    }
    if (seen == 0) break;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_accuracy = val_accuracy();
    rec.steps = report.steps;
    report.epochs.push_back(rec);
    if (metrics) {
      nlohmann::json line = {{"epoch", rec.epoch},
                             {"train_loss", rec.train_loss},
                             {"val_accuracy", rec.val_accuracy ? nlohmann::json(*rec.val_accuracy)
                                                               : nlohmann::json(nullptr)},
                             {"steps", rec.steps},
                             {"timestamp", utc_now()}};
      metrics << line.dump() << '\n';
      metrics.flush();
    }
    consider(epoch, rec.val_accuracy);
  }

  report.feature_encoder_digest_after = model.feature_encoder().parameter_digest();
  return TrainResult{std::move(*best), std::move(report)};
}

}  // namespace shield
