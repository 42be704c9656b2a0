#include "shield/alignment.hpp"
#include "shield/error.hpp"
#include "shield/feature_cache.hpp"

#include <cstdio>
#include <sstream>

namespace shield {

namespace {

std::string escape_html(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

constexpr const char* kStyle = R"(body{font-family:sans-serif;margin:2em;max-width:60em}
table{border-collapse:collapse;margin-bottom:1.5em}
td,th{border:1px solid #999;padding:0.25em 0.6em;text-align:left}
.post{border-top:1px solid #ccc;padding:0.6em 0}
.meta{color:#555;font-size:0.85em}
.llm{background:#bcd4ff;color:#0b3d91}
.human{background:#ffc4c4;color:#9b1111}
.both{background:#dcc2ff;color:#4b0082;font-weight:bold}
.legend span{padding:0 0.4em;margin-right:0.6em})";

}  // namespace

std::string overlap_report_html(std::span<const Post> posts,
                                const std::map<std::string, FeatureSet>& extracted,
                                const AlignmentResult& result) {
  std::map<std::string, const AlignmentExample*> scores;
  for (const auto& e : result.per_example) scores[e.post_id] = &e;

  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
    << "<title>Rationale overlap</title>\n<style>\n" << kStyle << "\n</style>\n</head>\n<body>\n";
  h << "<h1>Rationale overlap</h1>\n<table class=\"aggregate\">\n"
    << "<tr><th>Overlap similarity</th><td>" << percent(result.aggregate_overlap) << "</td></tr>\n"
    << "<tr><th>Cosine similarity</th><td>" << percent(result.aggregate_cosine) << "</td></tr>\n"
    << "<tr><th>Jaccard</th><td>" << percent(result.aggregate_jaccard) << "</td></tr>\n"
    << "<tr><th>Evaluated</th><td>" << result.n_evaluated << "</td></tr>\n"
    << "<tr><th>Skipped</th><td>" << result.n_skipped << "</td></tr>\n"
    << "<tr><th>Stop-words</th><td>" << escape_html(result.stopword_version) << "</td></tr>\n"
    << "</table>\n";
  h << "<p class=\"legend\"><span class=\"llm\">LLM only</span><span class=\"human\">human only"
    << "</span><span class=\"both\">both</span></p>\n";

  for (const auto& post : posts) {
    const auto it = extracted.find(post.id);
    const FeatureSet* fs = it == extracted.end() ? nullptr : &it->second;
    h << "<div class=\"post\" id=\"post-" << escape_html(post.id) << "\">\n<div class=\"meta\">"
      << escape_html(post.id);
    if (const auto s = scores.find(post.id); s != scores.end()) {
      h << " | overlap " << fixed4(s->second->overlap) << " | cosine "
        << fixed4(s->second->cosine);
    } else {
      h << " | not scored";
    }
    h << "</div>\n<p>";
    bool first = true;
    for (const auto& tok : color_tokens(post, fs)) {
      if (!first) h << ' ';
      first = false;
      if (tok.cls == TokenClass::kNone) {
        h << escape_html(tok.text);
      } else {
        h << "<span class=\"" << token_class_name(tok.cls) << "\">" << escape_html(tok.text)
          << "</span>";
      }
    }
    h << "</p>\n</div>\n";
  }
  h << "</body>\n</html>\n";
  return h.str();
}

void render_overlap_report(std::span<const Post> posts,
                           const std::map<std::string, FeatureSet>& extracted,
                           const AlignmentResult& result, const std::filesystem::path& out_path) {
  const std::string html = overlap_report_html(posts, extracted, result);
  try {
    atomic_write(out_path, html);
  } catch (const Error& e) {
    throw IoError("cannot write report " + out_path.string() + ": " + e.what());
  }
}

}  // namespace shield
