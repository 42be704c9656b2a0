#include "shield/feature_cache.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

namespace shield {
namespace fs = std::filesystem;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string temp_suffix() {
  static std::atomic<unsigned long> counter{0};
  std::ostringstream os;
  os << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.'
     << counter.fetch_add(1);
  return os.str();
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw StorageError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + temp_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw StorageError("short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw StorageError("cannot rename into " + path.string());
  }
}

std::string cache_key(std::string_view model_id, std::string_view prompt_version,
                      const DecodingParams& decoding, std::string_view text) {
  const nlohmann::json material = {
      std::string(model_id),     std::string(prompt_version),  decoding.temperature,
      decoding.top_p,            text::normalize_for_key(text),
  };
  return text::sha256_hex(material.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
}

FeatureCache::FeatureCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) {
    throw StorageError("cache directory " + dir_.string() + " is not usable");
  }
  const fs::path probe = dir_ / (".probe" + temp_suffix());
  {
    std::ofstream out(probe);
    if (!out) throw StorageError("cache directory " + dir_.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

fs::path FeatureCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<FeatureSet> FeatureCache::lookup(const std::string& key) const {
  std::ifstream in(entry_path(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("key", std::string{}) != key) return std::nullopt;
    return j.at("value").get<FeatureSet>();
  } catch (const nlohmann::json::exception&) {
    // A torn or foreign file is treated as a miss and overwritten later.
    return std::nullopt;
  }
}

void FeatureCache::store(const std::string& key, const FeatureSet& value) {
  const nlohmann::json entry = {
      {"key", key},
      {"created_at", utc_timestamp()},
      {"value", value},
  };
  atomic_write(entry_path(key),
               entry.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
}

void FeatureCache::store_failed_response(const std::string& key, std::string_view raw) {
  atomic_write(dir_ / "failed" / (key + ".txt"), raw);
}

}  // namespace shield
