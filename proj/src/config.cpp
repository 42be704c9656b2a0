#include "shield/config.hpp"

#include "shield/error.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace shield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw ConfigError(key + ": " + why);
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> known) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, _] : obj.items()) {
    if (!allowed.count(k)) fail(prefix.empty() ? k : prefix + "." + k, "unknown key");
  }
}

const json* section(const json& parent, const char* name, const std::string& key) {
  const auto it = parent.find(name);
  if (it == parent.end()) return nullptr;
  if (!it->is_object()) fail(key, "expected an object");
  return &*it;
}

template <typename T>
void read(const json& obj, const char* name, const std::string& key, T& out) {
  const auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    fail(key, "wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& raw) {
  const fs::path p(raw);
  return p.is_absolute() || base.empty() ? p : base / p;
}

void read_path(const json& obj, const char* name, const std::string& key, const fs::path& base,
               fs::path& out) {
  std::string raw;
  read(obj, name, key, raw);
  if (!raw.empty()) out = resolve(base, raw);
}

DatasetConfig parse_dataset(const json& j, const std::string& prefix, const fs::path& base) {
  if (!j.is_object()) fail(prefix, "expected an object");
  reject_unknown(j, prefix, {"path", "format", "platform", "label_map"});
  DatasetConfig d;
  read_path(j, "path", prefix + ".path", base, d.path);
  if (d.path.empty()) fail(prefix + ".path", "missing");
  if (!fs::exists(d.path)) fail(prefix + ".path", "no such file " + d.path.string());
  std::string s;
  read(j, "format", prefix + ".format", s);
  if (!s.empty()) {
    try {
      d.format = parse_format(s);
    } catch (const Error&) {
      fail(prefix + ".format", "unknown format '" + s + "'");
    }
  }
  s.clear();
  read(j, "platform", prefix + ".platform", s);
  if (!s.empty()) {
    try {
      d.platform = parse_platform(s);
    } catch (const Error&) {
      fail(prefix + ".platform", "unknown platform '" + s + "'");
    }
  }
  if (const json* lm = section(j, "label_map", prefix + ".label_map")) {
    for (const auto& [raw, target] : lm->items()) {
      const std::string key = prefix + ".label_map." + raw;
      if (target.is_null() || (target.is_string() && target.get<std::string>() == "drop")) {
        d.label_map[raw] = std::nullopt;
      } else if (target.is_number_integer() && (target.get<int>() == 0 || target.get<int>() == 1)) {
        d.label_map[raw] = target.get<int>();
      } else {
        fail(key, "expected 0, 1, null or \"drop\"");
      }
    }
  }
  return d;
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

const DatasetConfig& AppConfig::dataset(const std::string& name) const {
  const auto it = datasets.find(name);
  if (it == datasets.end()) fail("datasets." + name, "not configured");
  return it->second;
}

EncoderRegistry AppConfig::registry() const {
  EncoderRegistry r;
  for (const auto& [name, target] : encoders.aliases) r.alias(name, target);
  return r;
}

AppConfig parse_config(const json& j, const fs::path& base, const EnvLookup& env) {
  if (!j.is_object()) fail("<root>", "expected an object");
  reject_unknown(j, "", {"datasets", "encoders", "extraction", "train", "split", "output_dir",
                         "baseline"});
  AppConfig c;

  if (const json* ds = section(j, "datasets", "datasets")) {
    for (const auto& [name, entry] : ds->items()) {
      c.datasets.emplace(name, parse_dataset(entry, "datasets." + name, base));
    }
  }

  if (const json* e = section(j, "encoders", "encoders")) {
    reject_unknown(*e, "encoders", {"hsd_encoder", "fe_encoder", "max_tokens", "aliases"});
    read(*e, "hsd_encoder", "encoders.hsd_encoder", c.encoders.hsd_encoder);
    read(*e, "fe_encoder", "encoders.fe_encoder", c.encoders.fe_encoder);
    read(*e, "max_tokens", "encoders.max_tokens", c.encoders.max_tokens);
    read(*e, "aliases", "encoders.aliases", c.encoders.aliases);
    if (c.encoders.max_tokens < 2) fail("encoders.max_tokens", "must be at least 2");
    for (auto& [name, target] : c.encoders.aliases) {
      // Directory targets are config-relative like every other path.
      if (target.rfind("bert:", 0) == 0) target = "bert:" + resolve(base, target.substr(5)).string();
    }
  }

  auto& x = c.extraction;
  if (const json* e = section(j, "extraction", "extraction")) {
    reject_unknown(*e, "extraction",
                   {"client", "endpoint", "model_id", "api_key", "temperature", "top_p",
                    "max_tokens", "parallelism", "cache_dir", "replay_path", "lexicon_path",
                    "max_retries", "timeout_seconds", "rate_limit", "skip_unparseable"});
    std::string client = "live";
    read(*e, "client", "extraction.client", client);
    if (client == "live") {
      x.client = ClientKind::kLive;
    } else if (client == "replay") {
      x.client = ClientKind::kReplay;
    } else if (client == "lexicon" || client == "mock") {
      x.client = ClientKind::kLexicon;
    } else {
      fail("extraction.client", "expected live, replay or lexicon");
    }
    read(*e, "endpoint", "extraction.endpoint", x.endpoint);
    read(*e, "model_id", "extraction.model_id", x.model_id);
    read(*e, "api_key", "extraction.api_key", x.api_key);
    read(*e, "temperature", "extraction.temperature", x.decoding.temperature);
    read(*e, "top_p", "extraction.top_p", x.decoding.top_p);
    read(*e, "max_tokens", "extraction.max_tokens", x.decoding.max_tokens);
    read(*e, "parallelism", "extraction.parallelism", x.parallelism);
    read_path(*e, "cache_dir", "extraction.cache_dir", base, x.cache_dir);
    read_path(*e, "replay_path", "extraction.replay_path", base, x.replay_path);
    read_path(*e, "lexicon_path", "extraction.lexicon_path", base, x.lexicon_path);
    read(*e, "max_retries", "extraction.max_retries", x.max_retries);
    read(*e, "timeout_seconds", "extraction.timeout_seconds", x.timeout_seconds);
    read(*e, "rate_limit", "extraction.rate_limit", x.rate_limit);
    read(*e, "skip_unparseable", "extraction.skip_unparseable", x.skip_unparseable);
  }
  if (auto key = env(kApiKeyEnv); key && !key->empty()) x.api_key = *key;
  if (!(x.decoding.temperature >= 0.0 && x.decoding.temperature <= 2.0)) {
    fail("extraction.temperature", "must lie in [0, 2]");
  }
  if (!(x.decoding.top_p > 0.0 && x.decoding.top_p <= 1.0)) fail("extraction.top_p", "must lie in (0, 1]");
  if (x.parallelism < 1) fail("extraction.parallelism", "must be at least 1");
  if (x.max_retries < 0) fail("extraction.max_retries", "must not be negative");
  if (x.timeout_seconds < 1) fail("extraction.timeout_seconds", "must be positive");
  if (x.client == ClientKind::kReplay) {
    if (x.replay_path.empty()) fail("extraction.replay_path", "required by the replay client");
    if (!fs::exists(x.replay_path)) fail("extraction.replay_path", "no such file " + x.replay_path.string());
  }
  if (x.client == ClientKind::kLexicon) {
    if (x.lexicon_path.empty()) fail("extraction.lexicon_path", "required by the lexicon client");
    if (!fs::exists(x.lexicon_path)) fail("extraction.lexicon_path", "no such file " + x.lexicon_path.string());
  }

  if (const json* t = section(j, "train", "train")) {
    reject_unknown(*t, "train", {"learning_rate", "weight_decay", "batch_size", "epochs", "seed",
                                 "decision_threshold", "hidden_dim", "max_steps"});
    read(*t, "learning_rate", "train.learning_rate", c.train.learning_rate);
    read(*t, "weight_decay", "train.weight_decay", c.train.weight_decay);
    read(*t, "batch_size", "train.batch_size", c.train.batch_size);
    read(*t, "epochs", "train.epochs", c.train.epochs);
    read(*t, "seed", "train.seed", c.train.seed);
    read(*t, "decision_threshold", "train.decision_threshold", c.train.decision_threshold);
    read(*t, "hidden_dim", "train.hidden_dim", c.train.hidden_dim);
    read(*t, "max_steps", "train.max_steps", c.train.max_steps);
  }
  c.train.validate();

  if (const json* s = section(j, "split", "split")) {
    reject_unknown(*s, "split", {"ratios", "seed"});
    read(*s, "ratios", "split.ratios", c.split.ratios);
    read(*s, "seed", "split.seed", c.split.seed);
    double sum = 0.0;
    for (double r : c.split.ratios) {
      if (!(r > 0.0)) fail("split.ratios", "every ratio must be positive");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("split.ratios", "must sum to 1");
  }

  std::string out;
  read(j, "output_dir", "output_dir", out);
  c.output_dir = resolve(base, out.empty() ? "out" : out);

  if (const json* b = section(j, "baseline", "baseline")) {
    reject_unknown(*b, "baseline", {"exemplars", "strict"});
    read(*b, "strict", "baseline.strict", c.baseline.strict);
    if (const json* ex = section(*b, "exemplars", "baseline.exemplars")) {
      for (const auto& [name, entry] : ex->items()) {
        const std::string key = "baseline.exemplars." + name;
        if (!entry.is_object()) fail(key, "expected {\"text\", \"label\"}");
        Exemplar e;
        read(entry, "text", key + ".text", e.text);
        read(entry, "label", key + ".label", e.label);
        if (e.text.empty()) fail(key + ".text", "missing");
        if (e.label != 0 && e.label != 1) fail(key + ".label", "must be 0 or 1");
        c.baseline.exemplars.emplace(name, std::move(e));
      }
    }
  }
  return c;
}

AppConfig load_config(const fs::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) fail("<file>", "cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail("<file>", "invalid JSON in " + path.string());
  return parse_config(j, fs::absolute(path).parent_path(), env);
}

}  // namespace shield
