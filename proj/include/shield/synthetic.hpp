#pragma once

#include "shield/datasets.hpp"
#include "shield/lexicon.hpp"

#include <cstdint>
#include <vector>

namespace shield {

// Invented slur and profanity terms used by the synthetic corpus.
Lexicon synthetic_lexicon();

/// Label-balanced corpus that the lexicon separates perfectly: every
/// hateful post contains at least one lexicon term, no non-hateful post
/// does. Both classes share the same filler vocabulary.
std::vector<Post> make_separable_corpus(std::size_t n_posts = 200, std::uint64_t seed = 7);

/// Corpus with exact post and hateful counts, for checking dataset
/// statistics. Hateful posts are spread deterministically through the file.
std::vector<Post> make_counted_corpus(std::size_t n_posts, std::size_t n_hateful,
                                      Platform platform, std::uint64_t seed = 1);

}  // namespace shield
