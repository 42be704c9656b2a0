#include "shield/fusion.hpp"

#include "shield/error.hpp"
#include "shield/rng.hpp"

#include <algorithm>
#include <cmath>

namespace shield {

std::vector<double> fuse_embeddings(const EmbeddingVector& text_side,
                                    const EmbeddingVector& feature_side) {
  if (text_side.role != EmbeddingRole::kTextSide ||
      feature_side.role != EmbeddingRole::kFeatureSide) {
    throw RoleError("fusion expects (text_side, feature_side), got (" +
                    std::string(role_name(text_side.role)) + ", " +
                    std::string(role_name(feature_side.role)) + ")");
  }
  std::vector<double> out;
  out.reserve(text_side.dim() + feature_side.dim());
  out.insert(out.end(), text_side.values.begin(), text_side.values.end());
  out.insert(out.end(), feature_side.values.begin(), feature_side.values.end());
  return out;
}

double sigmoid(double logit) {
  if (logit >= 0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

double bce_loss(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) {
    throw LengthMismatch("bce_loss: " + std::to_string(probabilities.size()) +
                         " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  if (probabilities.empty()) throw EmptyBatch("bce_loss on an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    const double y = labels[i];
    total += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -total / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------

FusionHead::FusionHead(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  Rng rng(seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return m;
  };
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto h = static_cast<Eigen::Index>(hidden_dim);
  w1_ = Tensor("head.w1", uniform(h, in, input_dim));
  b1_ = Tensor("head.b1", uniform(h, 1, input_dim));
  w2_ = Tensor("head.w2", uniform(1, h, hidden_dim));
  b2_ = Tensor("head.b2", uniform(1, 1, hidden_dim));
}

double FusionHead::forward(const Eigen::VectorXd& x, Activations* acts) const {
  if (x.size() != w1_.value.cols()) {
    throw DimMismatch("fusion head expects " + std::to_string(w1_.value.cols()) +
                      " inputs, got " + std::to_string(x.size()));
  }
  Eigen::VectorXd pre = w1_.value * x + b1_.value.col(0);
  Eigen::VectorXd hidden = pre.cwiseMax(0.0);
  const double logit = w2_.value.row(0).dot(hidden) + b2_.value(0, 0);
  if (acts) {
    acts->input = x;
    acts->pre = std::move(pre);
    acts->hidden = std::move(hidden);
    acts->logit = logit;
  }
  return logit;
}

Eigen::VectorXd FusionHead::backward(const Activations& acts, double grad_logit) {
  w2_.grad.row(0) += grad_logit * acts.hidden.transpose();
  b2_.grad(0, 0) += grad_logit;
  Eigen::VectorXd g_pre = grad_logit * w2_.value.row(0).transpose();
  for (Eigen::Index i = 0; i < g_pre.size(); ++i) {
    if (acts.pre(i) <= 0.0) g_pre(i) = 0.0;
  }
  w1_.grad.noalias() += g_pre * acts.input.transpose();
  b1_.grad.col(0) += g_pre;
  return w1_.value.transpose() * g_pre;
}

void FusionHead::zero_grad() {
  for (Tensor* t : parameters()) t->zero_grad();
}

Prediction classify(std::span<const double> combined, const FusionHead& head,
                    double decision_threshold) {
  const Eigen::Map<const Eigen::VectorXd> x(combined.data(),
                                            static_cast<Eigen::Index>(combined.size()));
  Prediction p;
  p.probability = sigmoid(head.forward(x));
  p.label = p.probability >= decision_threshold ? 1 : 0;
  return p;
}

// ---------------------------------------------------------------------------

AdamW::AdamW(TensorRefs params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Tensor* p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const double lr = options_.learning_rate;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    p.value *= (1.0 - lr * options_.weight_decay);
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * p.grad;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.epsilon);
  }
}

void AdamW::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace shield
