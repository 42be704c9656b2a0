#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace shield {

/// BERT-style tokenizer: basic cleanup/punctuation splitting followed by
/// greedy longest-match WordPiece over a vocab.txt.
class WordPieceTokenizer {
 public:
  WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase);
  static WordPieceTokenizer from_vocab_file(const std::filesystem::path& path, bool lowercase);

  std::vector<std::string> basic_tokenize(std::string_view text) const;
  std::vector<std::string> wordpiece(const std::string& word) const;

  // [CLS] pieces... [SEP], truncated so the total is at most max_tokens.
  std::vector<int> encode(std::string_view text, std::size_t max_tokens) const;

  std::size_t vocab_size() const { return vocab_.size(); }

 private:
  int id_of(const std::string& piece) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> ids_;
  bool lowercase_;
  int unk_id_;
  int cls_id_;
  int sep_id_;
};

}  // namespace shield
