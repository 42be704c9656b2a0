#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace shield {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Tensors of a .safetensors file, widened to float32. Supported dtypes:
/// F32, F16, BF16. 1-D tensors load as a single row.
class SafeTensors {
 public:
  // EncoderLoadError on I/O or header problems.
  static SafeTensors load(const std::filesystem::path& path);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const RowMatrixF& at(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, RowMatrixF> tensors_;
  std::map<std::string, std::vector<std::int64_t>> shapes_;
};

}  // namespace shield
