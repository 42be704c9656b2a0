#pragma once

#include "shield/embedding.hpp"
#include "shield/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace shield {

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Text-first concatenation of a text-side and a feature-side embedding.
/// RoleError unless the roles are (text_side, feature_side).
std::vector<double> fuse_embeddings(const EmbeddingVector& text_side,
                                    const EmbeddingVector& feature_side);

double sigmoid(double logit);

/// Mean binary cross-entropy with probabilities clamped to [eps, 1 - eps].
/// LengthMismatch / EmptyBatch on bad input.
double bce_loss(std::span<const double> probabilities, std::span<const int> labels);

/// Two fully connected layers with a ReLU between them, ending in a scalar
/// logit: input_dim -> hidden_dim -> 1.
class FusionHead {
 public:
  struct Activations {
    Eigen::VectorXd input;
    Eigen::VectorXd pre;     // first layer output before ReLU
    Eigen::VectorXd hidden;  // after ReLU
    double logit = 0.0;
  };

  FusionHead() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from `seed`.
  FusionHead(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1_.value.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1_.value.rows()); }

  // DimMismatch when x has the wrong length.
  double forward(const Eigen::VectorXd& x, Activations* acts = nullptr) const;

  // Accumulates parameter gradients given d(loss)/d(logit); returns
  // d(loss)/d(input).
  Eigen::VectorXd backward(const Activations& acts, double grad_logit);

  TensorRefs parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  std::vector<const Tensor*> parameters() const { return {&w1_, &b1_, &w2_, &b2_}; }
  void zero_grad();

 private:
  Tensor w1_;  // hidden x input
  Tensor b1_;  // hidden x 1
  Tensor w2_;  // 1 x hidden
  Tensor b2_;  // 1 x 1
};

struct Prediction {
  double probability = 0.5;
  int label = 1;
};

/// probability = sigmoid(logit); label 1 iff probability >= threshold.
Prediction classify(std::span<const double> combined, const FusionHead& head,
                    double decision_threshold = 0.5);

struct AdamWOptions {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay, bias-corrected moments.
class AdamW {
 public:
  AdamW(TensorRefs params, AdamWOptions options);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  TensorRefs params_;
  AdamWOptions options_;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
  std::size_t t_ = 0;
};

}  // namespace shield
