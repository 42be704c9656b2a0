#include "shield/synthetic.hpp"

#include "shield/rng.hpp"

#include <array>
#include <cstdio>
#include <string_view>

namespace shield {

namespace {

constexpr std::array<std::string_view, 6> kSlurs = {"grubvoles", "snarkets", "filthlings",
                                                     "mudwarts", "blightkin", "scumtrolls"};
constexpr std::array<std::string_view, 3> kCuss = {"frakking", "dreck", "gorram"};
constexpr std::array<std::string_view, 6> kGroups = {"neighbors", "newcomers", "villagers",
                                                     "workers", "students", "fans"};
constexpr std::array<std::string_view, 16> kFiller = {
    "today", "the", "market", "was", "busy", "and", "loud", "near",
    "station", "again", "with", "many", "people", "around", "town", "square"};
constexpr std::array<std::string_view, 8> kBenign = {"welcome", "helpful", "friendly", "kind",
                                                     "great", "lovely", "thanks", "cheerful"};

template <std::size_t N>
std::string_view pick(Rng& rng, const std::array<std::string_view, N>& words) {
  return words[rng.index(N)];
}

std::string filler(Rng& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += ' ';
    out += pick(rng, kFiller);
  }
  return out;
}

std::string make_id(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return std::string(prefix) + buf;
}

}  // namespace

Lexicon synthetic_lexicon() {
  Lexicon lex;
  for (auto w : kSlurs) lex.emplace(std::string(w), FeatureCategory::kDerogatory);
  for (auto w : kCuss) lex.emplace(std::string(w), FeatureCategory::kCuss);
  return lex;
}

std::vector<Post> make_separable_corpus(std::size_t n_posts, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Post> posts;
  posts.reserve(n_posts);
  for (std::size_t i = 0; i < n_posts; ++i) {
    Post p;
    p.id = make_id("syn-", i);
    p.label = static_cast<int>(i % 2);
    p.platform = Platform::kOther;
    std::string text = filler(rng, 3 + rng.index(4));
    if (p.label == 1) {
      text += " those ";
      text += pick(rng, kGroups);
      text += " are ";
      text += pick(rng, kSlurs);
      if (rng.index(2) == 0) {
        text += " ";
        text += pick(rng, kCuss);
      }
    } else {
      text += " the ";
      text += pick(rng, kGroups);
      text += " are ";
      text += pick(rng, kBenign);
    }
    text += ". " + filler(rng, 2 + rng.index(3));
    p.text = std::move(text);
    posts.push_back(std::move(p));
  }
  return posts;
}

std::vector<Post> make_counted_corpus(std::size_t n_posts, std::size_t n_hateful,
                                      Platform platform, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> order(n_posts);
  for (std::size_t i = 0; i < n_posts; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<int> labels(n_posts, 0);
  for (std::size_t k = 0; k < n_hateful && k < n_posts; ++k) labels[order[k]] = 1;

  std::vector<Post> posts;
  posts.reserve(n_posts);
  for (std::size_t i = 0; i < n_posts; ++i) {
    Post p;
    p.id = make_id(std::string(platform_name(platform)) + "-", i);
    p.label = labels[i];
    p.platform = platform;
    p.text = filler(rng, 4) + (p.label ? " those people are " + std::string(pick(rng, kSlurs))
                                       : " " + std::string(pick(rng, kBenign)));
    posts.push_back(std::move(p));
  }
  return posts;
}

}  // namespace shield
