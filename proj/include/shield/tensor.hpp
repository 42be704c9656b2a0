#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace shield {

/// A trainable parameter with its accumulated gradient.
struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;

  Tensor() = default;
  Tensor(std::string n, Eigen::MatrixXd v)
      : name(std::move(n)), value(std::move(v)), grad(Eigen::MatrixXd::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

using TensorRefs = std::vector<Tensor*>;

// SHA-256 over names, shapes and raw values, in the given order.
std::string digest_tensors(const std::vector<const Tensor*>& tensors);

}  // namespace shield
