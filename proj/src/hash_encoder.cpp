#include "shield/embedding.hpp"
#include "shield/error.hpp"
#include "shield/rng.hpp"
#include "shield/text.hpp"

#include <cctype>
#include <cmath>

namespace shield {

std::vector<std::string> stub_tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x80 || std::isalnum(u)) {
      cur.push_back(static_cast<char>(u < 0x80 ? std::tolower(u) : u));
    } else if (text::is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

HashEncoder::HashEncoder(EncoderSpec spec, std::size_t dim, std::size_t buckets)
    : TrainableEncoder(std::move(spec)), dim_(dim), buckets_(buckets) {
  if (dim_ == 0 || buckets_ == 0) throw EncoderLoadError("stub encoder needs positive sizes");
  const auto d = static_cast<Eigen::Index>(dim_);
  Rng rng(text::fnv1a64(spec_.name));
  Eigen::MatrixXd embed(static_cast<Eigen::Index>(buckets_), d);
  for (Eigen::Index i = 0; i < embed.size(); ++i) embed.data()[i] = rng.normal();
  Eigen::MatrixXd proj(d, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal() * scale;
  embed_ = Tensor("embed", std::move(embed));
  cls_ = Tensor("cls", Eigen::MatrixXd::Zero(d, 1));
  proj_ = Tensor("proj", std::move(proj));
  bias_ = Tensor("bias", Eigen::MatrixXd::Zero(d, 1));
}

std::vector<std::size_t> HashEncoder::token_rows(std::string_view s) const {
  auto tokens = stub_tokenize(s);
  // One position is taken by [CLS].
  const std::size_t limit = spec_.max_tokens > 0 ? spec_.max_tokens - 1 : 0;
  if (tokens.size() > limit) tokens.resize(limit);
  std::vector<std::size_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(text::fnv1a64(t) % buckets_);
  return rows;
}

Eigen::VectorXd HashEncoder::forward(std::string_view s, ForwardTape& tape) const {
  tape.rows = token_rows(s);
  Eigen::VectorXd mixed = cls_.value.col(0);
  if (!tape.rows.empty()) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    for (auto r : tape.rows) mean += embed_.value.row(static_cast<Eigen::Index>(r)).transpose();
    mixed += mean / static_cast<double>(tape.rows.size());
  }
  tape.mixed = mixed;
  tape.hidden = (proj_.value * mixed + bias_.value.col(0)).array().tanh().matrix();
  return tape.hidden;
}

Eigen::VectorXd HashEncoder::encode(std::string_view s) const {
  ForwardTape tape;
  return forward(s, tape);
}

void HashEncoder::backward(const ForwardTape& tape, const Eigen::VectorXd& grad_out) {
  const Eigen::VectorXd g_pre =
      (grad_out.array() * (1.0 - tape.hidden.array().square())).matrix();
  proj_.grad.noalias() += g_pre * tape.mixed.transpose();
  bias_.grad.col(0) += g_pre;
  const Eigen::VectorXd g_mixed = proj_.value.transpose() * g_pre;
  cls_.grad.col(0) += g_mixed;
  if (!tape.rows.empty()) {
    const Eigen::RowVectorXd g_row = g_mixed.transpose() / static_cast<double>(tape.rows.size());
    for (auto r : tape.rows) embed_.grad.row(static_cast<Eigen::Index>(r)) += g_row;
  }
}

TensorRefs HashEncoder::parameters() { return {&embed_, &cls_, &proj_, &bias_}; }

std::vector<const Tensor*> HashEncoder::parameters() const {
  return {&embed_, &cls_, &proj_, &bias_};
}

std::string HashEncoder::parameter_digest() const { return digest_tensors(parameters()); }

std::unique_ptr<Encoder> HashEncoder::clone() const {
  return std::make_unique<HashEncoder>(*this);
}

}  // namespace shield
