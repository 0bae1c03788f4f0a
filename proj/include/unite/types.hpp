#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace unite {

class Vocab;
class Tokenizer;

// Base for every error the library raises.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Configuration invariant violation; carries the offending field name.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class ParseError : public Error {
public:
  explicit ParseError(const std::string& what) : Error(what) {}
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::optional<std::size_t> line() const noexcept { return line_; }

private:
  std::optional<std::size_t> line_;
};

class DuplicateTokenError : public Error {
public:
  using Error::Error;
};

class TokenizationError : public Error {
public:
  using Error::Error;
};

// Transport-level backend failure; callers may retry.
class BackendUnavailable : public Error {
public:
  using Error::Error;
};

// Malformed or out-of-contract backend response; not retryable.
class ProtocolError : public Error {
public:
  using Error::Error;
};

class NotInVocabulary : public Error {
public:
  using Error::Error;
};

class TapeMismatch : public Error {
public:
  using Error::Error;
};

class MissingScore : public Error {
public:
  MissingScore(const std::string& model_id, std::string task)
      : Error("missing score: model " + model_id + " has no score for task \"" +
              task + "\""),
        task_(std::move(task)) {}
  const std::string& task() const noexcept { return task_; }

private:
  std::string task_;
};

class UnsupportedBackend : public Error {
public:
  using Error::Error;
};

// A token's canonical decoded surface form. Byte equality is the sole
// alignment key across models, so any model-internal space markers must be
// decoded to literal bytes before a token text is constructed.
class TokenText {
public:
  explicit TokenText(std::string bytes) : bytes_(std::move(bytes)) {
    if (bytes_.empty()) {
      throw std::invalid_argument("TokenText must be non-empty");
    }
  }

  const std::string& str() const noexcept { return bytes_; }
  std::size_t size() const noexcept { return bytes_.size(); }

  // std::string ordering is unsigned byte order, which is the tie-break
  // order used throughout.
  friend auto operator<=>(const TokenText&, const TokenText&) = default;
  friend bool operator==(const TokenText&, const TokenText&) = default;

private:
  std::string bytes_;
};

class Probability {
public:
  Probability() noexcept : value_(0.0) {}
  explicit Probability(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {  // also rejects NaN
      throw std::invalid_argument("Probability must be in [0,1], got " +
                                  std::to_string(value));
    }
  }

  double value() const noexcept { return value_; }

  friend auto operator<=>(const Probability&, const Probability&) = default;

private:
  double value_;
};

struct TokenEntry {
  TokenText token;
  Probability prob;
};

// Static description of one ensemble member. Vocab and tokenizer handles are
// shared with the member's backend; scores are accuracy percentages in
// [0,100] and mean_response_length is in declared units (tokens or chars).
struct ModelProfile {
  std::string model_id;
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<const Tokenizer> tokenizer;
  std::map<std::string, double> scores;
  double mean_response_length = 0.0;
  // End-of-sequence token text; decoding stops when the primary member's
  // eos token is chosen.
  std::optional<TokenText> eos_token;
};

struct GreedyArgmax {};

struct TopKSample {
  int sample_k = 1;
  std::uint64_t seed = 0;
};

using SelectionPolicy = std::variant<GreedyArgmax, TopKSample>;

struct EnsembleConfig {
  int k = 10;
  int max_models = 4;
  std::string primary_model;
  SelectionPolicy selection_policy = GreedyArgmax{};
  Probability missing_prob_floor{};
  int max_new_tokens = 64;
  std::set<TokenText> stop_tokens;
};

// Throws ConfigError naming the violated field. Deterministic and
// side-effect-free.
void validate_config(const EnsembleConfig& cfg,
                     const std::vector<ModelProfile>& members);

}  // namespace unite

template <>
struct std::hash<unite::TokenText> {
  std::size_t operator()(const unite::TokenText& t) const noexcept {
    return std::hash<std::string>{}(t.str());
  }
};
