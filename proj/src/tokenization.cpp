#include "unite/tokenization.hpp"

#include <fstream>

#include <json.hpp>

namespace unite {

Vocab Vocab::from_tokens(std::vector<TokenText> tokens) {
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.entries_.reserve(v.tokens_.size());
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    const std::string& bytes = v.tokens_[i].str();
    auto [it, inserted] = v.entries_.emplace(bytes, static_cast<int>(i));
    if (!inserted) {
      throw DuplicateTokenError("duplicate token " + nlohmann::json(bytes).dump());
    }
    v.max_token_length_ = std::max(v.max_token_length_, bytes.size());
  }
  return v;
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open vocabulary file " + path.string());
  }
  std::vector<TokenText> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    nlohmann::json parsed =
        nlohmann::json::parse(line, /*cb=*/nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.is_string()) {
      throw ParseError(line_no, "expected a JSON string, got: " + line);
    }
    std::string text = parsed.get<std::string>();
    if (text.empty()) {
      throw ParseError(line_no, "empty token");
    }
    tokens.emplace_back(std::move(text));
  }
  if (tokens.empty()) {
    throw ParseError("empty vocabulary");
  }
  try {
    return Vocab::from_tokens(std::move(tokens));
  } catch (const DuplicateTokenError& e) {
    throw DuplicateTokenError(path.string() + ": " + e.what());
  }
}

std::vector<TokenText> Tokenizer::tokenize(const TokenText& w) const {
  const std::string& s = w.str();
  std::string_view rest(s);
  std::vector<TokenText> out;
  const std::size_t cap = vocab_->max_token_length();
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t take = std::min(cap, s.size() - pos);
    while (take > 0 && !vocab_->contains(rest.substr(pos, take))) {
      --take;
    }
    if (take == 0) {
      throw TokenizationError("no vocabulary entry covers byte " +
                              std::to_string(pos) + " of " +
                              nlohmann::json(s).dump());
    }
    out.emplace_back(std::string(rest.substr(pos, take)));
    pos += take;
  }
  return out;
}

std::string decode_space_markers(std::string_view raw) {
  // UTF-8 encodings of the marker glyphs.
  static constexpr std::string_view kLowerOneEighthBlock = "\xe2\x96\x81";  // U+2581 -> ' '
  static constexpr std::string_view kGWithDot = "\xc4\xa0";                  // U+0120 -> ' '
  static constexpr std::string_view kCWithDot = "\xc4\x8a";                  // U+010A -> '\n'
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw.substr(i).starts_with(kLowerOneEighthBlock)) {
      out.push_back(' ');
      i += kLowerOneEighthBlock.size();
    } else if (raw.substr(i).starts_with(kGWithDot)) {
      out.push_back(' ');
      i += kGWithDot.size();
    } else if (raw.substr(i).starts_with(kCWithDot)) {
      out.push_back('\n');
      i += kCWithDot.size();
    } else {
      out.push_back(raw[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace unite
