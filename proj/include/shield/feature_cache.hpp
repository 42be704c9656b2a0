#pragma once

#include "shield/feature_set.hpp"
#include "shield/llm_client.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace shield {

// SHA-256 over (model_id, prompt_version, temperature, top_p, trimmed NFC text).
std::string cache_key(std::string_view model_id, std::string_view prompt_version,
                      const DecodingParams& decoding, std::string_view text);

/// On-disk FeatureSet cache, one JSON file per entry at
/// `<dir>/<key[0:2]>/<key>.json`. Writes go to a temp file and are renamed
/// into place, so concurrent writers of the same key are harmless.
class FeatureCache {
 public:
  // Creates the directory if needed; StorageError when that fails or the
  // directory is not writable.
  explicit FeatureCache(std::filesystem::path dir);

  std::optional<FeatureSet> lookup(const std::string& key) const;
  void store(const std::string& key, const FeatureSet& value);

  // Keeps an unparseable reply at `<dir>/failed/<key>.txt`.
  void store_failed_response(const std::string& key, std::string_view raw);

  std::filesystem::path entry_path(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// Writes `bytes` to `path` through a sibling temp file and rename.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

}  // namespace shield
