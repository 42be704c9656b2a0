#include "shield/wordpiece.hpp"

#include "shield/error.hpp"
#include "shield/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <fstream>

namespace shield {
namespace {

bool is_whitespace(UChar32 c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || u_charType(c) == U_SPACE_SEPARATOR;
}

bool is_control(UChar32 c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  const auto t = u_charType(c);
  return t == U_CONTROL_CHAR || t == U_FORMAT_CHAR;
}

bool is_punctuation(UChar32 c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
      (c >= 123 && c <= 126)) {
    return true;
  }
  return u_ispunct(c);
}

bool is_cjk(UChar32 c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x20000 && c <= 0x2A6DF) || (c >= 0x2A700 && c <= 0x2B73F) ||
         (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

std::string to_utf8(const icu::UnicodeString& s) {
  std::string out;
  s.toUTF8String(out);
  return out;
}

icu::UnicodeString lower_strip_accents(const icu::UnicodeString& word) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString lowered(word);
  lowered.toLower();
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) return lowered;
  const icu::UnicodeString decomposed = nfd->normalize(lowered, status);
  if (U_FAILURE(status)) return lowered;
  icu::UnicodeString out;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    if (u_charType(c) != U_NON_SPACING_MARK) out.append(c);
    i += U16_LENGTH(c);
  }
  return out;
}

}  // namespace

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase)
    : vocab_(std::move(vocab)), lowercase_(lowercase) {
  for (std::size_t i = 0; i < vocab_.size(); ++i) ids_.emplace(vocab_[i], static_cast<int>(i));
  auto required = [&](const char* tok) {
    const auto it = ids_.find(tok);
    if (it == ids_.end()) throw EncoderLoadError(std::string("vocab lacks ") + tok);
    return it->second;
  };
  unk_id_ = required("[UNK]");
  cls_id_ = required("[CLS]");
  sep_id_ = required("[SEP]");
}

WordPieceTokenizer WordPieceTokenizer::from_vocab_file(const std::filesystem::path& path,
                                                       bool lowercase) {
  std::ifstream in(path);
  if (!in) throw EncoderLoadError("cannot open vocab " + path.string());
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  return WordPieceTokenizer(std::move(vocab), lowercase);
}

int WordPieceTokenizer::id_of(const std::string& piece) const {
  const auto it = ids_.find(piece);
  return it == ids_.end() ? unk_id_ : it->second;
}

std::vector<std::string> WordPieceTokenizer::basic_tokenize(std::string_view input) const {
  const icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(input.data(), static_cast<int32_t>(input.size())));

  // Clean and space out CJK characters, then split on whitespace.
  std::vector<icu::UnicodeString> words;
  icu::UnicodeString cur;
  auto flush = [&] {
    if (!cur.isEmpty()) words.push_back(cur);
    cur.remove();
  };
  for (int32_t i = 0; i < u.length();) {
    const UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    if (c == 0 || c == 0xFFFD || is_control(c)) continue;
    if (is_whitespace(c)) {
      flush();
    } else if (is_cjk(c)) {
      flush();
      cur.append(c);
      flush();
    } else {
      cur.append(c);
    }
  }
  flush();

  std::vector<std::string> out;
  for (auto& w : words) {
    const icu::UnicodeString word = lowercase_ ? lower_strip_accents(w) : w;
    icu::UnicodeString piece;
    for (int32_t i = 0; i < word.length();) {
      const UChar32 c = word.char32At(i);
      i += U16_LENGTH(c);
      if (is_punctuation(c)) {
        if (!piece.isEmpty()) out.push_back(to_utf8(piece));
        piece.remove();
        out.push_back(to_utf8(icu::UnicodeString(c)));
      } else {
        piece.append(c);
      }
    }
    if (!piece.isEmpty()) out.push_back(to_utf8(piece));
  }
  return out;
}

std::vector<std::string> WordPieceTokenizer::wordpiece(const std::string& word) const {
  const icu::UnicodeString u = icu::UnicodeString::fromUTF8(word);
  if (u.countChar32() > 100) return {"[UNK]"};
  std::vector<std::string> pieces;
  int32_t start = 0;
  while (start < u.length()) {
    int32_t end = u.length();
    std::string found;
    while (start < end) {
      std::string candidate = to_utf8(icu::UnicodeString(u, start, end - start));
      if (start > 0) candidate = "##" + candidate;
      if (ids_.count(candidate)) {
        found = std::move(candidate);
        break;
      }
      end = u.moveIndex32(end, -1);
    }
    if (found.empty()) return {"[UNK]"};
    pieces.push_back(std::move(found));
    start = end;
  }
  return pieces;
}

std::vector<int> WordPieceTokenizer::encode(std::string_view input, std::size_t max_tokens) const {
  if (max_tokens < 2) throw TokenizationError("max_tokens must leave room for [CLS] and [SEP]");
  std::vector<int> ids{cls_id_};
  for (const auto& word : basic_tokenize(input)) {
    for (const auto& piece : wordpiece(word)) {
      if (ids.size() + 1 >= max_tokens) break;
      ids.push_back(id_of(piece));
    }
    if (ids.size() + 1 >= max_tokens) break;
  }
  ids.push_back(sep_id_);
  return ids;
}

}  // namespace shield
