#include "shield/embedding.hpp"

#include "shield/bert_encoder.hpp"
#include "shield/error.hpp"
#include "shield/text.hpp"

#include <charconv>
#include <cstring>
#include <fstream>

namespace shield {

std::string_view role_name(EmbeddingRole role) {
  return role == EmbeddingRole::kTextSide ? "text_side" : "feature_side";
}

std::string digest_tensors(const std::vector<const Tensor*>& tensors) {
  std::string bytes;
  for (const Tensor* t : tensors) {
    bytes += t->name;
    bytes.push_back('\0');
    const std::int64_t shape[2] = {t->value.rows(), t->value.cols()};
    bytes.append(reinterpret_cast<const char*>(shape), sizeof shape);
    bytes.append(reinterpret_cast<const char*>(t->value.data()),
                 static_cast<std::size_t>(t->value.size()) * sizeof(double));
  }
  return text::sha256_hex(bytes);
}

// ---------------------------------------------------------------------------

EncoderRegistry::EncoderRegistry() {
  aliases_["detector-default"] = "stub-64";
  aliases_["feature-default"] = "stub-64";
  aliases_["alt-encoder"] = "stub-48";
}

void EncoderRegistry::alias(std::string name, std::string target) {
  aliases_[std::move(name)] = std::move(target);
}

std::string EncoderRegistry::resolve(const std::string& name) const {
  std::string cur = name;
  for (int depth = 0; depth < 16; ++depth) {
    const auto it = aliases_.find(cur);
    if (it == aliases_.end()) return cur;
    cur = it->second;
  }
  throw EncoderLoadError("encoder alias cycle at '" + name + "'");
}

std::unique_ptr<Encoder> EncoderRegistry::load(const EncoderSpec& spec) const {
  const std::string target = resolve(spec.name);
  if (target.starts_with("stub-")) {
    std::size_t dim = 0;
    const char* first = target.data() + 5;
    const char* last = target.data() + target.size();
    const auto [ptr, ec] = std::from_chars(first, last, dim);
    if (ec != std::errc{} || ptr != last || dim == 0) {
      throw EncoderLoadError("bad stub encoder name '" + target + "'");
    }
    return std::make_unique<HashEncoder>(spec, dim);
  }
  std::string dir = target;
  if (dir.starts_with("bert:")) dir.erase(0, 5);
  if (std::filesystem::is_directory(dir)) return std::make_unique<BertEncoder>(spec, dir);
  throw EncoderLoadError("cannot resolve encoder '" + spec.name + "' (-> '" + target + "')");
}

// ---------------------------------------------------------------------------

namespace {

EmbeddingVector to_embedding(const Eigen::VectorXd& v, EmbeddingRole role) {
  EmbeddingVector out;
  out.role = role;
  out.values.assign(v.data(), v.data() + v.size());
  for (double x : out.values) {
    if (!std::isfinite(x)) throw EncoderLoadError("encoder produced a non-finite value");
  }
  return out;
}

void append_list(std::string& out, const std::vector<std::string>& items, std::string_view sep) {
  if (items.empty()) {
    out += "none";
    return;
  }
  out += text::join(items, sep);
}

}  // namespace

EmbeddingVector encode_text(std::string_view s, const Encoder& encoder) {
  if (text::trim(s).empty()) throw EmptyInput("cannot encode blank text");
  return to_embedding(encoder.encode(s), EmbeddingRole::kTextSide);
}

std::string serialize_features(const FeatureSet& fs) {
  if (fs.non_hateful) return "non-hateful";
  std::string out = "rationales: ";
  append_list(out, fs.rationales, "; ");
  out += " | derogatory: ";
  append_list(out, fs.derogatory_language, ", ");
  out += " | cuss words: ";
  append_list(out, fs.cuss_words, ", ");
  return out;
}

EmbeddingVector encode_features(const FeatureSet& fs, const Encoder& encoder) {
  if (encoder.spec().trainable) {
    throw RoleError("feature-side encoder '" + encoder.spec().name + "' must be frozen");
  }
  return to_embedding(encoder.encode(serialize_features(fs)), EmbeddingRole::kFeatureSide);
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kCacheMagic[8] = {'S', 'H', 'F', 'E', 'M', 'B', '0', '1'};
constexpr std::size_t kKeyLen = 64;
}  // namespace

FeatureEmbeddingCache::FeatureEmbeddingCache(std::filesystem::path path, const Encoder& encoder)
    : path_(std::move(path)), encoder_(encoder.clone()), encoder_digest_(encoder.parameter_digest()) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  char magic[8];
  std::uint32_t dim = 0;
  char digest[kKeyLen];
  std::uint64_t count = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(digest, sizeof digest);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, kCacheMagic, sizeof magic) != 0 ||
      dim != encoder.hidden_size() || std::string(digest, kKeyLen) != encoder_digest_) {
    return;  // stale or foreign file: start empty
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    char key[kKeyLen];
    std::vector<float> v(dim);
    in.read(key, sizeof key);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) {
      entries_.clear();
      return;
    }
    entries_.emplace(std::string(key, kKeyLen), std::move(v));
  }
}

EmbeddingVector FeatureEmbeddingCache::get(const FeatureSet& fs) {
  const std::string key = feature_digest(fs);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = entries_.find(key); it != entries_.end()) {
      EmbeddingVector out;
      out.role = EmbeddingRole::kFeatureSide;
      out.values.assign(it->second.begin(), it->second.end());
      return out;
    }
  }
  EmbeddingVector fresh = encode_features(fs, *encoder_);
  std::vector<float> rounded(fresh.values.begin(), fresh.values.end());
  fresh.values.assign(rounded.begin(), rounded.end());
  std::lock_guard lock(mutex_);
  entries_.emplace(key, std::move(rounded));
  return fresh;
}

std::size_t FeatureEmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void FeatureEmbeddingCache::save() const {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write embedding cache " + path_.string());
  const auto dim = static_cast<std::uint32_t>(encoder_->hidden_size());
  const std::uint64_t count = entries_.size();
  out.write(kCacheMagic, sizeof kCacheMagic);
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  out.write(encoder_digest_.data(), kKeyLen);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [key, v] : entries_) {
    out.write(key.data(), kKeyLen);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to " + path_.string());
}

}  // namespace shield
