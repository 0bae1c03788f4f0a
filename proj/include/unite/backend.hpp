#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "unite/tokenization.hpp"
#include "unite/types.hpp"

namespace unite {

// The full prompt plus every token emitted so far. Append-only within a
// decode run; all members share one context and re-tokenize it natively.
class GenerationContext {
public:
  explicit GenerationContext(std::string text) : text_(std::move(text)) {
    if (text_.empty()) {
      throw std::invalid_argument("GenerationContext must be non-empty");
    }
  }

  void append(const TokenText& token) { text_ += token.str(); }
  const std::string& text() const noexcept { return text_; }

private:
  std::string text_;
};

// One model's output at one decode step. topk is sorted by descending
// probability (ties by ascending token byte order) with no duplicate texts;
// lookup carries every token probability the backend happened to price
// beyond the top-k, for tape serialization and offline inspection.
struct StepDistribution {
  std::string model_id;
  std::vector<TokenEntry> topk;
  std::unordered_map<TokenText, Probability> lookup;
};

// A member's entire distribution at one step: tokens absent from `nonzero`
// have probability exactly 0. Only backends that own a full table (scripted)
// can produce one.
struct FullDistribution {
  std::string model_id;
  std::shared_ptr<const Vocab> vocab;
  std::unordered_map<TokenText, Probability> nonzero;
};

// Uniform source of per-step token distributions. Probabilities, not logits,
// cross this boundary; backends owning logits apply their own softmax first.
class Backend {
public:
  virtual ~Backend() = default;

  // Top min(k, vocab size) tokens with probabilities for the given context.
  // Throws BackendUnavailable (retryable) or ProtocolError (not retryable).
  virtual StepDistribution step(const GenerationContext& ctx, int k) = 0;

  // The model's probability for w at this step, or `floor` when this backend
  // cannot price w. Throws NotInVocabulary when w is outside the model
  // vocabulary; callers route such tokens through re-tokenization instead.
  virtual Probability prob_of(const GenerationContext& ctx, const TokenText& w,
                              Probability floor) = 0;

  virtual const std::string& model_id() const = 0;
  virtual std::shared_ptr<const Vocab> vocab() const = 0;

  virtual bool supports_full_enumeration() const { return false; }
  virtual FullDistribution full_distribution(const GenerationContext& ctx) {
    (void)ctx;
    throw UnsupportedBackend("backend " + model_id() +
                             " cannot enumerate its full distribution");
  }
};

// Deterministic fake model defined by per-context lookup tables. A context
// with no table falls back to `fallback` when one is set; otherwise step()
// raises ProtocolError. Tokens absent from the resolved table have
// probability exactly 0 (the table is the whole distribution), so prob_of
// never degrades to the floor. Immutable after construction.
class ScriptedBackend : public Backend {
public:
  using Table = std::unordered_map<TokenText, Probability>;

  ScriptedBackend(std::string model_id, std::shared_ptr<const Vocab> vocab,
                  std::unordered_map<std::string, Table> contexts,
                  std::optional<Table> fallback = std::nullopt);

  // Convenience for single-step tests: one table answering every context.
  ScriptedBackend(std::string model_id, std::shared_ptr<const Vocab> vocab,
                  Table fallback)
      : ScriptedBackend(std::move(model_id), std::move(vocab), {},
                        std::move(fallback)) {}

  StepDistribution step(const GenerationContext& ctx, int k) override;
  Probability prob_of(const GenerationContext& ctx, const TokenText& w,
                      Probability floor) override;

  const std::string& model_id() const override { return model_id_; }
  std::shared_ptr<const Vocab> vocab() const override { return vocab_; }

  bool supports_full_enumeration() const override { return true; }
  FullDistribution full_distribution(const GenerationContext& ctx) override;

private:
  const Table& resolve(const GenerationContext& ctx) const;

  std::string model_id_;
  std::shared_ptr<const Vocab> vocab_;
  std::unordered_map<std::string, Table> contexts_;
  std::optional<Table> fallback_;
  // Vocab tokens in byte order, for padding sparse tables up to k.
  std::vector<TokenText> sorted_tokens_;
};

// Script file: JSON {"model_id", "contexts": {ctx: {token: prob}},
// "fallback"?: {token: prob}}. Every scripted token must be in the vocab.
std::shared_ptr<ScriptedBackend> load_scripted_backend(
    const std::filesystem::path& script_path, std::shared_ptr<const Vocab> vocab);

}  // namespace unite
