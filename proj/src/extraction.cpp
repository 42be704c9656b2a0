#include "shield/extraction.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

namespace shield {

const std::string_view kFeaturePromptInstructionV1 =
    "You are a content moderation bot. Identify the list of rationales, list of derogatory "
    "language, list of cuss words that promote a hateful sentiment and respond with "
    "non-hateful if there are none. Note: The output should be in a json format.";

std::string build_feature_prompt(std::string_view input, std::string_view template_version) {
  if (template_version != "v1") {
    throw ConfigError("unknown feature prompt version '" + std::string(template_version) + "'");
  }
  if (text::trim(input).empty()) throw EmptyInput("feature prompt needs non-blank text");
  std::string prompt(kFeaturePromptInstructionV1);
  prompt += "\nText: ";
  prompt += input;
  return prompt;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

enum class Slot { kRationales, kDerogatory, kCuss };

std::string normalize_key(std::string_view key) {
  std::string out;
  for (char c : text::to_lower_ascii(key)) {
    if (c == '_' || c == '-' || text::is_ascii_space(c)) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  constexpr std::string_view kListOf = "list of ";
  if (out.starts_with(kListOf)) out.erase(0, kListOf.size());
  return out;
}

std::optional<Slot> slot_for(std::string_view key) {
  const auto k = normalize_key(key);
  if (k == "rationales" || k == "rationale") return Slot::kRationales;
  if (k == "derogatory language" || k == "derogatory") return Slot::kDerogatory;
  if (k == "cuss words" || k == "profanity") return Slot::kCuss;
  return std::nullopt;
}

bool is_non_hateful_answer(std::string_view s) {
  std::string t = text::to_lower_ascii(text::trim(s));
  auto strip = [&](auto pred) {
    while (!t.empty() && pred(t.front())) t.erase(t.begin());
    while (!t.empty() && pred(t.back())) t.pop_back();
  };
  strip([](char c) { return c == '"' || c == '\'' || c == '`' || c == '.' || text::is_ascii_space(c); });
  return t == "non-hateful" || t == "non hateful" || t == "nonhateful" || t == "non_hateful";
}

bool is_placeholder(std::string_view s) {
  const auto t = text::to_lower_ascii(s);
  return t == "none" || t == "n/a" || t == "null" || is_non_hateful_answer(t);
}

void collect(const nlohmann::json& v, std::vector<std::string>& out) {
  auto push = [&](std::string s) {
    s = text::trim(s);
    if (!s.empty() && !is_placeholder(s)) out.push_back(std::move(s));
  };
  if (v.is_string()) {
    push(v.get<std::string>());
  } else if (v.is_number() || v.is_boolean()) {
    if (v.is_boolean()) return;
    push(v.dump());
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_string() || e.is_number()) collect(e, out);
    }
  }
}

// Returns the first balanced {...} substring that parses as JSON.
std::optional<nlohmann::json> find_embedded_object(std::string_view s) {
  for (std::size_t start = s.find('{'); start != std::string_view::npos;
       start = s.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < s.size(); ++i) {
      const char c = s[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto j = nlohmann::json::parse(s.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded()) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

std::string strip_code_fence(std::string s) {
  if (!s.starts_with("```")) return s;
  const auto nl = s.find('\n');
  if (nl == std::string::npos) return s;
  s.erase(0, nl + 1);
  const auto close = s.rfind("```");
  if (close != std::string::npos) s.erase(close);
  return text::trim(s);
}

bool interpret(const nlohmann::json& j, FeatureSet& fs, int depth) {
  if (j.is_string()) {
    if (is_non_hateful_answer(j.get<std::string>())) {
      fs.non_hateful = true;
      return true;
    }
    return false;
  }
  if (j.is_array() && j.size() == 1) return interpret(j.front(), fs, depth);
  if (!j.is_object()) return false;

  bool recognized = false;
  for (const auto& [key, value] : j.items()) {
    const auto slot = slot_for(key);
    if (!slot) continue;
    recognized = true;
    switch (*slot) {
      case Slot::kRationales: collect(value, fs.rationales); break;
      case Slot::kDerogatory: collect(value, fs.derogatory_language); break;
      case Slot::kCuss: collect(value, fs.cuss_words); break;
    }
  }
  if (recognized) {
    fs.non_hateful = !fs.has_features();
    return true;
  }

  // {"label": "non-hateful"}, {"non_hateful": true} and similar.
  for (const auto& [key, value] : j.items()) {
    if (is_non_hateful_answer(key) && value.is_boolean() && value.get<bool>()) {
      fs.non_hateful = true;
      return true;
    }
    if (value.is_string() && is_non_hateful_answer(value.get<std::string>())) {
      fs.non_hateful = true;
      return true;
    }
  }
  // A single wrapper object, e.g. {"output": {...}}.
  if (depth < 4 && j.size() == 1 && j.begin()->is_object()) {
    return interpret(*j.begin(), fs, depth + 1);
  }
  return false;
}

}  // namespace

FeatureSet parse_feature_response(std::string_view raw) {
  FeatureSet fs;
  fs.raw_response = std::string(raw);

  const std::string trimmed = text::trim(raw);
  if (trimmed.empty()) throw ParseError("empty response");
  if (is_non_hateful_answer(trimmed)) {
    fs.non_hateful = true;
    return fs;
  }

  const std::string body = strip_code_fence(trimmed);
  std::optional<nlohmann::json> parsed;
  if (auto j = nlohmann::json::parse(body, nullptr, false); !j.is_discarded()) {
    parsed = std::move(j);
  } else {
    parsed = find_embedded_object(body);
  }
  if (!parsed) throw ParseError("no JSON object or non-hateful answer in response");

  if (!interpret(*parsed, fs, 0)) {
    throw ParseError("JSON response has no rationale/derogatory/cuss keys");
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Client-backed extraction

FeatureSet extract_features(std::string_view input, LlmClient& client, FeatureCache* cache,
                            const ExtractOptions& options) {
  const std::string key =
      cache_key(client.model_id(), options.prompt_version, client.decoding(), input);
  if (cache) {
    if (auto hit = cache->lookup(key)) return *hit;
  }

  LlmRequest request{build_feature_prompt(input, options.prompt_version), std::string(input),
                     LlmTask::kFeatures};
  const std::string raw = complete_with_retry(client, request, options.retry, options.limiter);

  FeatureSet fs;
  try {
    fs = parse_feature_response(raw);
  } catch (const ParseError&) {
    if (cache) cache->store_failed_response(key, raw);
    throw;
  }
  fs.model_id = client.model_id();
  fs.prompt_version = options.prompt_version;
  if (cache) cache->store(key, fs);
  return fs;
}

CorpusExtraction extract_corpus(std::span<const Post> posts, LlmClient& client,
                                FeatureCache* cache, const ExtractOptions& options) {
  std::vector<std::optional<FeatureSet>> results(posts.size());
  std::vector<char> failed(posts.size(), 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= posts.size()) return;
      try {
        results[i] = extract_features(posts[i].text, client, cache, options);
      } catch (const ParseError&) {
        if (options.skip_unparseable) {
          failed[i] = 1;
          continue;
        }
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      }
    }
  };

  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min(options.parallelism, posts.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (first_error) std::rethrow_exception(first_error);

  CorpusExtraction out;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (failed[i]) {
      out.failed_ids.push_back(posts[i].id);
    } else {
      out.features.emplace(posts[i].id, std::move(*results[i]));
    }
  }
  return out;
}

void write_features_jsonl(const std::filesystem::path& path, std::span<const Post> posts,
                          const std::map<std::string, FeatureSet>& features) {
  std::string buffer;
  for (const auto& post : posts) {
    const auto it = features.find(post.id);
    if (it == features.end()) continue;
    const FeatureSet& fs = it->second;
    const nlohmann::json j = {
        {"post_id", post.id},
        {"rationales", fs.rationales},
        {"derogatory_language", fs.derogatory_language},
        {"cuss_words", fs.cuss_words},
        {"non_hateful", fs.non_hateful},
        {"model_id", fs.model_id},
        {"prompt_version", fs.prompt_version},
    };
    buffer += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    buffer += '\n';
  }
  try {
    atomic_write(path, buffer);
  } catch (const StorageError& e) {
    throw IoError(e.what());
  }
}

std::map<std::string, FeatureSet> read_features_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open features file " + path.string());
  std::map<std::string, FeatureSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    try {
      FeatureSet fs = j.get<FeatureSet>();
      out[j.at("post_id").get<std::string>()] = std::move(fs);
    } catch (const nlohmann::json::exception& e) {
      throw MissingField(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace shield
