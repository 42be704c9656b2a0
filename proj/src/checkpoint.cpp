#include "shield/error.hpp"
#include "shield/feature_cache.hpp"
#include "shield/training.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace shield {

namespace {

constexpr char kWeightsMagic[8] = {'S', 'H', 'W', 'G', 'T', '0', '0', '1'};
constexpr const char* kFormat = "shield-checkpoint-1";

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

std::string pack_tensors(const std::vector<const Tensor*>& tensors) {
  std::string out(kWeightsMagic, sizeof kWeightsMagic);
  put<std::uint64_t>(out, tensors.size());
  for (const Tensor* t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->name.size()));
    out += t->name;
    put<std::int64_t>(out, t->value.rows());
    put<std::int64_t>(out, t->value.cols());
    out.append(reinterpret_cast<const char*>(t->value.data()),
               static_cast<std::size_t>(t->value.size()) * sizeof(double));
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated checkpoint weights");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, Eigen::MatrixXd> unpack_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());
  if (std::memcmp(r.take(sizeof kWeightsMagic), kWeightsMagic, sizeof kWeightsMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint weights file");
  }
  std::map<std::string, Eigen::MatrixXd> out;
  const auto n = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string name(r.take(len), len);
    const auto rows = r.get<std::int64_t>();
    const auto cols = r.get<std::int64_t>();
    if (rows < 0 || cols < 0) throw FormatError("negative tensor shape in " + path.string());
    Eigen::MatrixXd m(rows, cols);
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    std::memcpy(m.data(), r.take(bytes), bytes);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

void assign(TensorRefs params, const std::map<std::string, Eigen::MatrixXd>& stored) {
  for (Tensor* t : params) {
    const auto it = stored.find(t->name);
    if (it == stored.end()) throw FormatError("checkpoint lacks tensor " + t->name);
    if (it->second.rows() != t->value.rows() || it->second.cols() != t->value.cols()) {
      throw DimMismatch("checkpoint tensor " + t->name + " has the wrong shape");
    }
    t->value = it->second;
    t->zero_grad();
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ShieldModel& model,
                     const CheckpointInfo& info) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string());

  std::vector<const Tensor*> tensors = model.head().parameters();
  const bool with_text = model.text_encoder().supports_training();
  if (with_text) {
    const auto& enc = dynamic_cast<const TrainableEncoder&>(model.text_encoder());
    for (const Tensor* t : enc.parameters()) tensors.push_back(t);
  }

  nlohmann::json manifest = {
      {"format", kFormat},
      {"train_config", info.config},
      {"text_encoder", info.text_encoder},
      {"feature_encoder", info.feature_encoder},
      {"feature_encoder_digest", info.feature_encoder_digest},
      {"max_tokens", info.max_tokens},
      {"input_dim", model.head().input_dim()},
      {"hidden_dim", model.head().hidden_dim()},
      {"decision_threshold", model.decision_threshold()},
      {"text_encoder_weights", with_text},
  };
  atomic_write(dir / "weights.bin", pack_tensors(tensors));
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const EncoderRegistry& registry) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in, nullptr, false);
  if (manifest.is_discarded() || manifest.value("format", std::string()) != kFormat) {
    throw FormatError("unrecognized checkpoint manifest in " + dir.string());
  }

  CheckpointInfo info;
  try {
    info.config = manifest.at("train_config").get<TrainConfig>();
    info.text_encoder = manifest.at("text_encoder").get<std::string>();
    info.feature_encoder = manifest.at("feature_encoder").get<std::string>();
    info.feature_encoder_digest = manifest.at("feature_encoder_digest").get<std::string>();
    info.max_tokens = manifest.at("max_tokens").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("incomplete checkpoint manifest: " + std::string(e.what()));
  }
  const double threshold = manifest.value("decision_threshold", info.config.decision_threshold);

  auto text = registry.load(EncoderSpec{info.text_encoder, true, info.max_tokens});
  auto feature = registry.load(EncoderSpec{info.feature_encoder, false, info.max_tokens});
  if (feature->parameter_digest() != info.feature_encoder_digest) {
    throw EncoderLoadError("feature encoder '" + info.feature_encoder +
                           "' differs from the one the checkpoint was trained with");
  }

  const auto stored = unpack_tensors(dir / "weights.bin");
  FusionHead head(text->hidden_size() + feature->hidden_size(),
                  manifest.value("hidden_dim", info.config.hidden_dim), info.config.seed);
  assign(head.parameters(), stored);
  if (manifest.value("text_encoder_weights", false)) {
    auto* trainable = dynamic_cast<TrainableEncoder*>(text.get());
    if (!trainable) throw EncoderLoadError("checkpoint holds text encoder weights it cannot load");
    assign(trainable->parameters(), stored);
  }
  return LoadedCheckpoint{ShieldModel(std::move(text), std::move(feature), std::move(head), threshold),
                          std::move(info)};
}

}  // namespace shield
