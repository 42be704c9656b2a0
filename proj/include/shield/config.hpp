#pragma once

#include "shield/baselines.hpp"
#include "shield/datasets.hpp"
#include "shield/training.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace shield {

inline constexpr const char* kApiKeyEnv = "SHIELD_LLM_API_KEY";

struct DatasetConfig {
  std::filesystem::path path;
  DataFormat format = DataFormat::kJsonl;
  Platform platform = Platform::kOther;
  LabelMap label_map;
};

struct EncoderConfig {
  std::string hsd_encoder = "detector-default";
  std::string fe_encoder = "feature-default";
  std::size_t max_tokens = 512;
  std::map<std::string, std::string> aliases;
};

enum class ClientKind { kLive, kReplay, kLexicon };

struct ExtractionConfig {
  ClientKind client = ClientKind::kLive;
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model_id = "gpt-3.5-turbo-0613";
  std::string api_key;  // from SHIELD_LLM_API_KEY when set
  DecodingParams decoding;
  std::size_t parallelism = 4;
  std::filesystem::path cache_dir;
  std::filesystem::path replay_path;
  std::filesystem::path lexicon_path;
  int max_retries = 3;
  int timeout_seconds = 60;
  double rate_limit = 0.0;  // calls per second, 0 for none
  bool skip_unparseable = false;
};

struct SplitConfig {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 42;
};

struct BaselineConfig {
  std::map<std::string, Exemplar> exemplars;  // by dataset name
  bool strict = false;
};

struct AppConfig {
  std::map<std::string, DatasetConfig> datasets;
  EncoderConfig encoders;
  ExtractionConfig extraction;
  TrainConfig train;
  SplitConfig split;
  std::filesystem::path output_dir = "out";
  BaselineConfig baseline;

  // ConfigError("datasets.<name>") when absent.
  const DatasetConfig& dataset(const std::string& name) const;
  EncoderRegistry registry() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Reads the real process environment.
std::optional<std::string> process_env(const std::string& name);

/// Parses and validates a JSON config. Relative paths resolve against the
/// config file's directory. Every failure is a ConfigError whose message
/// starts with the dotted key at fault.
AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);
AppConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir,
                       const EnvLookup& env = process_env);

}  // namespace shield
