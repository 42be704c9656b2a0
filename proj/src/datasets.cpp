#include "shield/datasets.hpp"

#include "shield/error.hpp"
#include "shield/rng.hpp"
#include "shield/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

namespace shield {

std::string_view platform_name(Platform p) {
  switch (p) {
    case Platform::kGab: return "gab";
    case Platform::kReddit: return "reddit";
    case Platform::kTwitter: return "twitter";
    case Platform::kYoutube: return "youtube";
    case Platform::kImplicitHs: return "implicit_hs";
    case Platform::kOther: return "other";
  }
  return "other";
}

Platform parse_platform(std::string_view name) {
  const auto n = text::to_lower_ascii(name);
  if (n == "gab") return Platform::kGab;
  if (n == "reddit") return Platform::kReddit;
  if (n == "twitter") return Platform::kTwitter;
  if (n == "youtube") return Platform::kYoutube;
  if (n == "implicit_hs" || n == "implicit") return Platform::kImplicitHs;
  if (n == "other") return Platform::kOther;
  throw FormatError("unknown platform '" + std::string(name) + "'");
}

DataFormat parse_format(std::string_view name) {
  const auto n = text::to_lower_ascii(name);
  if (n == "jsonl") return DataFormat::kJsonl;
  if (n == "csv") return DataFormat::kCsv;
  if (n == "hatexplain") return DataFormat::kHatexplain;
  throw ConfigError("unknown dataset format '" + std::string(name) + "'");
}

LabelMap default_label_map(DataFormat format, Platform platform) {
  LabelMap m = {{"0", 0}, {"1", 1}, {"hateful", 1}, {"non-hateful", 0}, {"hate", 1},
                {"normal", 0}};
  if (format == DataFormat::kHatexplain) {
    m["hatespeech"] = 1;
    m["offensive"] = 1;
  }
  if (platform == Platform::kImplicitHs) {
    m["implicit_hate"] = 1;
    m["not_hate"] = 0;
    m["explicit_hate"] = std::nullopt;
  }
  return m;
}

std::vector<std::string> post_tokens(std::string_view s) { return text::split_whitespace(s); }

namespace {

struct RowContext {
  const std::filesystem::path& path;
  std::size_t row;

  std::string where() const { return path.filename().string() + " row " + std::to_string(row); }
};

// Returns the binary label, or nullopt when the row is to be dropped.
std::optional<int> map_label(const std::string& raw, const LabelMap& labels, const RowContext& ctx) {
  const auto key = text::to_lower_ascii(text::trim(raw));
  if (const auto it = labels.find(key); it != labels.end()) return it->second;
  throw FormatError(ctx.where() + ": unmapped label '" + raw + "'");
}

std::string label_key(const nlohmann::json& v, const RowContext& ctx) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  throw FormatError(ctx.where() + ": label must be a string or integer");
}

std::string id_string(const nlohmann::json& v, const RowContext& ctx) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  throw FormatError(ctx.where() + ": id must be a string or integer");
}

std::vector<RationaleSpan> spans_from_json(const nlohmann::json& arr,
                                           const std::vector<std::string>& tokens,
                                           const RowContext& ctx) {
  if (!arr.is_array()) throw FormatError(ctx.where() + ": human_rationales must be an array");
  std::vector<RationaleSpan> spans;
  for (const auto& s : arr) {
    std::size_t b = 0;
    std::size_t e = 0;
    try {
      if (s.is_array() && s.size() == 2) {
        b = s[0].get<std::size_t>();
        e = s[1].get<std::size_t>();
      } else {
        b = s.at("token_start").get<std::size_t>();
        e = s.at("token_end").get<std::size_t>();
      }
    } catch (const nlohmann::json::exception&) {
      throw FormatError(ctx.where() + ": malformed rationale span");
    }
    if (!(b < e && e <= tokens.size())) {
      throw FormatError(ctx.where() + ": rationale span [" + std::to_string(b) + "," +
                        std::to_string(e) + ") outside " + std::to_string(tokens.size()) +
                        " tokens");
    }
    spans.push_back({b, e, {tokens.begin() + static_cast<std::ptrdiff_t>(b),
                            tokens.begin() + static_cast<std::ptrdiff_t>(e)}});
  }
  return spans;
}

Platform platform_from_id(const std::string& id, Platform fallback) {
  if (id.ends_with("_gab")) return Platform::kGab;
  if (id.ends_with("_twitter")) return Platform::kTwitter;
  return fallback;
}

// Majority vote over annotator masks: a token needs more than half of them.
std::vector<RationaleSpan> spans_from_masks(const nlohmann::json& masks,
                                            const std::vector<std::string>& tokens,
                                            const RowContext& ctx) {
  if (!masks.is_array()) throw FormatError(ctx.where() + ": rationales must be an array of masks");
  if (masks.empty()) return {};
  std::vector<int> votes(tokens.size(), 0);
  for (const auto& mask : masks) {
    if (!mask.is_array() || mask.size() != tokens.size()) {
      throw FormatError(ctx.where() + ": rationale mask length differs from token count");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!mask[i].is_number()) throw FormatError(ctx.where() + ": non-numeric rationale mask");
      if (mask[i].get<double>() != 0.0) ++votes[i];
    }
  }
  const int needed = static_cast<int>(masks.size() / 2) + 1;
  std::vector<RationaleSpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (votes[i] < needed) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < tokens.size() && votes[j] >= needed) ++j;
    spans.push_back({i, j, {tokens.begin() + static_cast<std::ptrdiff_t>(i),
                            tokens.begin() + static_cast<std::ptrdiff_t>(j)}});
    i = j;
  }
  return spans;
}

void add_post(LoadResult& out, std::optional<int> label, Post post) {
  if (!label) {
    ++out.n_dropped;
    return;
  }
  post.label = *label;
  out.posts.push_back(std::move(post));
}

void load_jsonl(std::istream& in, const std::filesystem::path& path, const LoadOptions& opt,
                const LabelMap& labels, LoadResult& out) {
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const RowContext ctx{path, row};
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError(ctx.where() + ": not a JSON object");
    for (const char* field : {"id", "text", "label"}) {
      if (!j.contains(field) || j.at(field).is_null()) {
        throw MissingField(ctx.where() + ": missing field '" + field + "'");
      }
    }
    if (!j.at("text").is_string()) throw FormatError(ctx.where() + ": text must be a string");
    Post post;
    post.id = id_string(j.at("id"), ctx);
    post.text = j.at("text").get<std::string>();
    post.platform = opt.platform;
    if (j.contains("platform") && j.at("platform").is_string()) {
      try {
        post.platform = parse_platform(j.at("platform").get<std::string>());
      } catch (const FormatError& e) {
        throw FormatError(ctx.where() + ": " + e.what());
      }
    }
    if (j.contains("human_rationales") && !j.at("human_rationales").is_null()) {
      post.human_rationales = spans_from_json(j.at("human_rationales"), post_tokens(post.text), ctx);
    }
    add_post(out, map_label(label_key(j.at("label"), ctx), labels, ctx), std::move(post));
  }
}

// RFC 4180 records; quoted fields may hold separators, newlines and "".
std::vector<std::vector<std::string>> read_csv_records(std::istream& in,
                                                      const std::filesystem::path& path) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
      if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
      record.clear();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    throw FormatError(path.filename().string() + " row " + std::to_string(records.size()) +
                      ": unterminated quoted field");
  }
  if (field_started || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

void load_csv(std::istream& in, const std::filesystem::path& path, const LoadOptions& opt,
              const LabelMap& labels, LoadResult& out) {
  const auto records = read_csv_records(in, path);
  if (records.empty()) return;
  const auto& header = records.front();
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (text::to_lower_ascii(text::trim(header[i])) == name) return i;
    }
    return std::nullopt;
  };
  const auto id_col = column("id");
  const auto text_col = column("text");
  const auto label_col = column("label");
  const auto platform_col = column("platform");
  for (auto [name, col] : {std::pair{"id", id_col}, {"text", text_col}, {"label", label_col}}) {
    if (!col) throw MissingField(path.filename().string() + " header: missing column '" + name + "'");
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    const RowContext ctx{path, r};
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw FormatError(ctx.where() + ": expected " + std::to_string(header.size()) +
                        " fields, found " + std::to_string(rec.size()));
    }
    for (auto [name, col] : {std::pair{"id", *id_col}, {"text", *text_col}, {"label", *label_col}}) {
      if (text::trim(rec[col]).empty()) {
        throw MissingField(ctx.where() + ": missing field '" + name + "'");
      }
    }
    Post post;
    post.id = rec[*id_col];
    post.text = rec[*text_col];
    post.platform = opt.platform;
    if (platform_col && !text::trim(rec[*platform_col]).empty()) {
      try {
        post.platform = parse_platform(text::trim(rec[*platform_col]));
      } catch (const FormatError& e) {
        throw FormatError(ctx.where() + ": " + e.what());
      }
    }
    add_post(out, map_label(rec[*label_col], labels, ctx), std::move(post));
  }
}

void load_hatexplain_record(const nlohmann::json& rec, std::string fallback_id, const RowContext& ctx,
                            const LoadOptions& opt, const LabelMap& labels, LoadResult& out) {
  if (!rec.is_object()) throw FormatError(ctx.where() + ": record is not an object");
  if (!rec.contains("post_tokens")) throw MissingField(ctx.where() + ": missing field 'post_tokens'");
  Post post;
  if (rec.contains("post_id")) {
    post.id = id_string(rec.at("post_id"), ctx);
  } else if (!fallback_id.empty()) {
    post.id = std::move(fallback_id);
  } else {
    throw MissingField(ctx.where() + ": missing field 'post_id'");
  }
  std::vector<std::string> tokens;
  try {
    tokens = rec.at("post_tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(ctx.where() + ": post_tokens must be a list of strings");
  }
  // Tokens may themselves contain spaces; re-split so spans index the text.
  post.text = text::join(tokens, " ");
  const auto text_tokens = post_tokens(post.text);
  if (text_tokens.size() != tokens.size()) {
    throw FormatError(ctx.where() + ": post_tokens contain whitespace or empty tokens");
  }
  post.platform = platform_from_id(post.id, opt.platform);

  std::optional<int> label;
  if (rec.contains("label")) {
    label = map_label(label_key(rec.at("label"), ctx), labels, ctx);
  } else if (rec.contains("annotators")) {
    int hateful = 0;
    int normal = 0;
    for (const auto& a : rec.at("annotators")) {
      if (!a.is_object() || !a.contains("label")) {
        throw MissingField(ctx.where() + ": annotator without label");
      }
      const auto vote = map_label(label_key(a.at("label"), ctx), labels, ctx);
      if (vote) (*vote ? hateful : normal)++;
    }
    if (hateful != normal) label = hateful > normal ? 1 : 0;
  } else {
    throw MissingField(ctx.where() + ": missing field 'label' (or 'annotators')");
  }
  post.human_rationales =
      rec.contains("rationales") ? spans_from_masks(rec.at("rationales"), tokens, ctx)
                                 : std::vector<RationaleSpan>{};
  add_post(out, label, std::move(post));
}

void load_hatexplain(std::istream& in, const std::filesystem::path& path, const LoadOptions& opt,
                     const LabelMap& labels, LoadResult& out) {
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  const auto whole = nlohmann::json::parse(data, nullptr, false);
  if (!whole.is_discarded() && whole.is_object() && !whole.contains("post_tokens")) {
    // dataset.json shape: {post_id: record, ...}
    std::size_t row = 0;
    for (const auto& [key, rec] : whole.items()) {
      load_hatexplain_record(rec, key, RowContext{path, ++row}, opt, labels, out);
    }
    return;
  }
  if (!whole.is_discarded() && whole.is_array()) {
    std::size_t row = 0;
    for (const auto& rec : whole) load_hatexplain_record(rec, "", RowContext{path, ++row}, opt, labels, out);
    return;
  }
  std::istringstream lines(data);
  std::string line;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    ++row;
    if (text::trim(line).empty()) continue;
    const RowContext ctx{path, row};
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw FormatError(ctx.where() + ": not valid JSON");
    load_hatexplain_record(rec, "", ctx, opt, labels, out);
  }
}

}  // namespace

LoadResult load_posts(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  LabelMap labels = default_label_map(options.format, options.platform);
  for (const auto& [k, v] : options.labels) labels[text::to_lower_ascii(k)] = v;

  LoadResult out;
  switch (options.format) {
    case DataFormat::kJsonl: load_jsonl(in, path, options, labels, out); break;
    case DataFormat::kCsv: load_csv(in, path, options, labels, out); break;
    case DataFormat::kHatexplain: load_hatexplain(in, path, options, labels, out); break;
  }
  return out;
}

std::string preprocess_text(std::string_view raw) {
  const std::string s = text::to_lower_ascii(raw);
  auto is_word = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  };
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::string_view rest(s.data() + i, s.size() - i);
    if (rest.starts_with("http://") || rest.starts_with("https://") || rest.starts_with("www.")) {
      out += "<url>";
      while (i < s.size() && !text::is_ascii_space(s[i])) ++i;
      continue;
    }
    if (s[i] == '@' && i + 1 < s.size() && is_word(s[i + 1])) {
      out += "<user>";
      ++i;
      while (i < s.size() && is_word(s[i])) ++i;
      continue;
    }
    if (text::is_ascii_space(s[i])) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      ++i;
      continue;
    }
    out.push_back(s[i++]);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<Post> prepare_posts(std::vector<Post> posts, std::size_t* n_empty) {
  std::vector<Post> kept;
  kept.reserve(posts.size());
  std::size_t empty = 0;
  for (auto& p : posts) {
    p.text = preprocess_text(p.text);
    if (p.text.empty()) {
      ++empty;
      continue;
    }
    kept.push_back(std::move(p));
  }
  if (n_empty) *n_empty = empty;
  return kept;
}

Split split_dataset(std::span<const Post> posts, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidRatios("split ratios must all be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidRatios("split ratios must sum to 1");

  std::array<std::vector<std::size_t>, 2> strata;
  for (std::size_t i = 0; i < posts.size(); ++i) strata[posts[i].label == 1 ? 1 : 0].push_back(i);

  // Part sizes per stratum: floors first, then the leftover units go to the
  // largest fractional parts while keeping both the per-stratum totals and
  // the corpus-wide part sizes (largest remainder of n * ratio) exact.
  auto largest_remainder = [&](std::size_t n) {
    std::array<std::size_t, 3> out{};
    std::array<double, 3> frac{};
    std::size_t used = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      const double x = static_cast<double>(n) * ratios[p];
      out[p] = static_cast<std::size_t>(std::floor(x));
      frac[p] = x - std::floor(x);
      used += out[p];
    }
    for (; used < n; ++used) {
      const auto p = static_cast<std::size_t>(std::max_element(frac.begin(), frac.end()) - frac.begin());
      ++out[p];
      frac[p] = -1.0;
    }
    return out;
  };
  const auto part_total = largest_remainder(posts.size());
  std::array<std::array<std::size_t, 3>, 2> quota{};
  std::array<std::size_t, 2> row_left{};
  std::array<std::size_t, 3> col_left = part_total;
  std::vector<std::tuple<double, std::size_t, std::size_t>> fracs;
  for (std::size_t s = 0; s < 2; ++s) {
    row_left[s] = strata[s].size();
    for (std::size_t p = 0; p < 3; ++p) {
      const double x = static_cast<double>(strata[s].size()) * ratios[p];
      quota[s][p] = static_cast<std::size_t>(std::floor(x));
      row_left[s] -= quota[s][p];
      col_left[p] -= quota[s][p];
      fracs.emplace_back(x - std::floor(x), s, p);
    }
  }
  std::stable_sort(fracs.begin(), fracs.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  for (const auto& [f, s, p] : fracs) {
    if (row_left[s] > 0 && col_left[p] > 0) {
      ++quota[s][p];
      --row_left[s];
      --col_left[p];
    }
  }
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t p = 0; row_left[s] > 0 && p < 3; ++p) {
      const std::size_t k = std::min(row_left[s], col_left[p]);
      quota[s][p] += k;
      row_left[s] -= k;
      col_left[p] -= k;
    }
  }

  Rng rng(seed);
  std::vector<int> part(posts.size(), 2);
  for (std::size_t s = 0; s < 2; ++s) {
    auto& idx = strata[s];
    rng.shuffle(idx);
    const std::size_t n_train = quota[s][0];
    const std::size_t n_val = quota[s][1];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      part[idx[k]] = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    }
  }
  Split split;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    (part[i] == 0 ? split.train : part[i] == 1 ? split.val : split.test).push_back(posts[i]);
  }
  return split;
}

DatasetStats dataset_stats(std::span<const Post> posts) {
  if (posts.empty()) throw EmptyDataset("dataset has no posts");
  DatasetStats s;
  s.n_posts = posts.size();
  for (const auto& p : posts) s.n_hateful += p.label == 1 ? 1 : 0;
  // Integer rounding of 1000*h/n keeps the one-decimal value exact.
  const auto tenths = (2000 * s.n_hateful + s.n_posts) / (2 * s.n_posts);
  s.hate_pct = static_cast<double>(tenths) / 10.0;
  return s;
}

void write_posts_jsonl(const std::filesystem::path& path, std::span<const Post> posts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : posts) {
    nlohmann::json j = {{"id", p.id}, {"text", p.text}, {"label", p.label},
                        {"platform", std::string(platform_name(p.platform))}};
    if (p.human_rationales) {
      auto spans = nlohmann::json::array();
      for (const auto& s : *p.human_rationales) {
        spans.push_back({{"token_start", s.token_start}, {"token_end", s.token_end}});
      }
      j["human_rationales"] = std::move(spans);
    }
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace shield
