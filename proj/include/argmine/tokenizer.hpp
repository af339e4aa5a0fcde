#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "argmine/error.hpp"
#include "argmine/utf8.hpp"

namespace argmine {

struct TokenSequence {
  std::vector<std::int32_t> ids;
  std::vector<std::string> pieces;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

namespace detail {

inline bool is_whitespace(char32_t c) {
  if (c == U' ' || c == U'\t' || c == U'\n' || c == U'\r') return true;
  return u_charType(UChar32(c)) == U_SPACE_SEPARATOR;
}

inline bool is_control(char32_t c) {
  if (c == U'\t' || c == U'\n' || c == U'\r') return false;
  switch (u_charType(UChar32(c))) {
    case U_CONTROL_CHAR:
    case U_FORMAT_CHAR:
    case U_SURROGATE:
    case U_PRIVATE_USE_CHAR:
    case U_UNASSIGNED:
      return true;
    default:
      return false;
  }
}

inline bool is_punctuation(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126)) return true;
  switch (u_charType(UChar32(c))) {
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

inline bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
         (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

// Lowercase, then canonical decomposition with combining marks removed.
inline std::u32string lower_strip_accents(const std::u32string& word) {
  const std::string utf = utf8::encode(word);
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(icu::StringPiece(utf.data(), int32_t(utf.size())));
  s.toLower(icu::Locale::getRoot());
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw EncodingError("ICU NFD normalizer unavailable");
  icu::UnicodeString decomposed = nfd->normalize(s, status);
  if (U_FAILURE(status)) throw EncodingError("NFD normalization failed");
  std::u32string out;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    if (u_charType(c) != U_NON_SPACING_MARK) out.push_back(char32_t(c));
    i += U16_LENGTH(c);
  }
  return out;
}

}  // namespace detail

/// Uncased BERT tokenization: text cleanup, CJK isolation, lowercasing with
/// accent stripping, punctuation splitting, then greedy longest-match
/// WordPiece against the checkpoint vocabulary.
class WordPieceTokenizer {
 public:
  static constexpr std::size_t kMaxCharsPerWord = 100;

  explicit WordPieceTokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], std::int32_t(i));
    for (const char* special : {"[CLS]", "[SEP]", "[UNK]", "[PAD]"})
      if (!index_.count(special)) throw LoadError(std::string("vocabulary lacks ") + special);
    cls_ = index_.at("[CLS]");
    sep_ = index_.at("[SEP]");
    unk_ = index_.at("[UNK]");
  }

  static WordPieceTokenizer from_file(const std::filesystem::path& vocab_path) {
    std::ifstream in(vocab_path, std::ios::binary);
    if (!in) throw LoadError("cannot open vocabulary " + vocab_path.string());
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      vocab.push_back(line);
    }
    return WordPieceTokenizer(std::move(vocab));
  }

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  std::int32_t cls_id() const { return cls_; }
  std::int32_t sep_id() const { return sep_; }
  std::int32_t unk_id() const { return unk_; }

  /// Basic (pre-WordPiece) tokens.
  std::vector<std::string> basic_tokens(std::string_view text) const {
    std::u32string cleaned;
    for (char32_t c : utf8::decode(text)) {
      if (c == 0 || c == 0xFFFD || detail::is_control(c)) continue;
      if (detail::is_whitespace(c)) {
        cleaned.push_back(U' ');
      } else if (detail::is_cjk(c)) {
        cleaned.push_back(U' ');
        cleaned.push_back(c);
        cleaned.push_back(U' ');
      } else {
        cleaned.push_back(c);
      }
    }
    std::vector<std::string> out;
    for (const auto& word : split_whitespace(cleaned)) {
      const std::string utf = utf8::encode(word);
      if (is_special(utf)) {
        out.push_back(utf);
        continue;
      }
      std::u32string current;
      for (char32_t c : detail::lower_strip_accents(word)) {
        if (detail::is_punctuation(c)) {
          if (!current.empty()) out.push_back(utf8::encode(current));
          current.clear();
          out.push_back(utf8::encode(std::u32string(1, c)));
        } else {
          current.push_back(c);
        }
      }
      if (!current.empty()) out.push_back(utf8::encode(current));
    }
    return out;
  }

  /// WordPiece pieces of one basic token.
  std::vector<std::string> wordpiece(const std::string& token) const {
    const auto chars = utf8::decode(token);
    if (chars.size() > kMaxCharsPerWord) return {"[UNK]"};
    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < chars.size()) {
      std::size_t end = chars.size();
      std::string found;
      while (start < end) {
        std::string sub = utf8::encode(std::u32string_view(chars).substr(start, end - start));
        if (start > 0) sub = "##" + sub;
        if (index_.count(sub)) {
          found = std::move(sub);
          break;
        }
        --end;
      }
      if (found.empty()) return {"[UNK]"};
      pieces.push_back(std::move(found));
      start = end;
    }
    return pieces;
  }

  /// [CLS] pieces... [SEP], truncated to at most max_tokens entries.
  TokenSequence encode(std::string_view text, std::size_t max_tokens) const {
    if (max_tokens < 2) throw ValidationError("max_tokens must leave room for the framing tokens");
    bool blank = true;
    for (char32_t c : utf8::decode(text))
      if (!detail::is_whitespace(c)) blank = false;
    if (blank) throw ValidationError("cannot tokenize empty text");
    TokenSequence seq;
    seq.ids.push_back(cls_);
    seq.pieces.emplace_back("[CLS]");
    for (const auto& word : basic_tokens(text)) {
      for (auto& piece : wordpiece(word)) {
        if (seq.ids.size() + 1 >= max_tokens) break;
        seq.ids.push_back(index_.at(piece));
        seq.pieces.push_back(std::move(piece));
      }
      if (seq.ids.size() + 1 >= max_tokens) break;
    }
    seq.ids.push_back(sep_);
    seq.pieces.emplace_back("[SEP]");
    return seq;
  }

 private:
  bool is_special(const std::string& s) const {
    return s == "[CLS]" || s == "[SEP]" || s == "[UNK]" || s == "[PAD]" || s == "[MASK]";
  }

  static std::vector<std::u32string> split_whitespace(const std::u32string& s) {
    std::vector<std::u32string> out;
    std::u32string cur;
    for (char32_t c : s) {
      if (c == U' ') {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::int32_t cls_ = 0, sep_ = 0, unk_ = 0;
};

}  // namespace argmine
