#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unite/types.hpp"

namespace unite {

// Immutable token-text -> local-id map. Ids are dense, 0-based, assigned in
// insertion order (for file-loaded vocabularies: line number - 1).
class Vocab {
public:
  static Vocab from_tokens(std::vector<TokenText> tokens);

  bool contains(const TokenText& w) const { return contains(w.str()); }
  bool contains(std::string_view bytes) const {
    return entries_.find(bytes) != entries_.end();
  }

  // -1 when absent.
  int id_of(const TokenText& w) const {
    auto it = entries_.find(std::string_view(w.str()));
    return it == entries_.end() ? -1 : it->second;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t max_token_length() const noexcept { return max_token_length_; }

  // All tokens in id order.
  const std::vector<TokenText>& tokens() const noexcept { return tokens_; }

private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::unordered_map<std::string, int, StringHash, std::equal_to<>> entries_;
  std::vector<TokenText> tokens_;
  std::size_t max_token_length_ = 0;
};

// Vocabulary file: UTF-8 text, one JSON-string-escaped token per line
// (whitespace-bearing tokens stay bit-exact); line number - 1 is the id.
// Throws ParseError (with line number) or DuplicateTokenError.
Vocab load_vocab(const std::filesystem::path& path);

// Greedy longest-match segmentation against a vocabulary, left to right.
// Deterministic; total whenever every byte of the input is covered by some
// vocabulary entry.
class Tokenizer {
public:
  explicit Tokenizer(std::shared_ptr<const Vocab> vocab)
      : vocab_(std::move(vocab)) {}

  // concat(result) == w and every piece is a vocab entry; a token that is
  // itself a vocab entry always comes back as [w]. Throws TokenizationError
  // when some byte position cannot be covered.
  std::vector<TokenText> tokenize(const TokenText& w) const;

  const Vocab& vocab() const noexcept { return *vocab_; }
  std::shared_ptr<const Vocab> vocab_ptr() const noexcept { return vocab_; }

private:
  std::shared_ptr<const Vocab> vocab_;
};

// Adapter hook for vocabularies dumped from real tokenizers: rewrites the
// common space/newline marker glyphs (U+2581, U+0120, U+010A) to the literal
// bytes they stand for, so token texts compare byte-equal across models.
std::string decode_space_markers(std::string_view raw);

}  // namespace unite
