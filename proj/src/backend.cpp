#include "unite/backend.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace unite {

namespace {

void check_table_in_vocab(const ScriptedBackend::Table& table, const Vocab& vocab,
                          const std::string& model_id) {
  for (const auto& [token, prob] : table) {
    (void)prob;
    if (!vocab.contains(token)) {
      throw ProtocolError("scripted table for " + model_id +
                          " prices a token outside its vocabulary: " +
                          nlohmann::json(token.str()).dump());
    }
  }
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::string model_id,
                                 std::shared_ptr<const Vocab> vocab,
                                 std::unordered_map<std::string, Table> contexts,
                                 std::optional<Table> fallback)
    : model_id_(std::move(model_id)),
      vocab_(std::move(vocab)),
      contexts_(std::move(contexts)),
      fallback_(std::move(fallback)) {
  for (const auto& [ctx, table] : contexts_) {
    (void)ctx;
    check_table_in_vocab(table, *vocab_, model_id_);
  }
  if (fallback_) {
    check_table_in_vocab(*fallback_, *vocab_, model_id_);
  }
  sorted_tokens_ = vocab_->tokens();
  std::sort(sorted_tokens_.begin(), sorted_tokens_.end());
}

const ScriptedBackend::Table& ScriptedBackend::resolve(
    const GenerationContext& ctx) const {
  auto it = contexts_.find(ctx.text());
  if (it != contexts_.end()) {
    return it->second;
  }
  if (fallback_) {
    return *fallback_;
  }
  throw ProtocolError("no scripted distribution for context " +
                      nlohmann::json(ctx.text()).dump() + " (model " +
                      model_id_ + ")");
}

StepDistribution ScriptedBackend::step(const GenerationContext& ctx, int k) {
  if (k < 1) {
    throw std::invalid_argument("k must be >= 1");
  }
  const Table& table = resolve(ctx);
  const std::size_t want =
      std::min(static_cast<std::size_t>(k), vocab_->size());

  std::vector<TokenEntry> entries;
  entries.reserve(std::max(table.size(), want));
  for (const auto& [token, prob] : table) {
    entries.push_back({token, prob});
  }
  std::sort(entries.begin(), entries.end(),
            [](const TokenEntry& a, const TokenEntry& b) {
              if (a.prob.value() != b.prob.value()) {
                return a.prob.value() > b.prob.value();
              }
              return a.token < b.token;
            });
  if (entries.size() < want) {
    // Pad with zero-probability vocab tokens in byte order so |topk| is
    // exactly min(k, |V|).
    for (const TokenText& t : sorted_tokens_) {
      if (entries.size() >= want) {
        break;
      }
      if (!table.contains(t)) {
        entries.push_back({t, Probability(0.0)});
      }
    }
  } else {
    entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(want),
                  entries.end());
  }

  return StepDistribution{model_id_, std::move(entries), table};
}

Probability ScriptedBackend::prob_of(const GenerationContext& ctx,
                                     const TokenText& w, Probability floor) {
  (void)floor;  // scripted tables price every in-vocab token (zero if absent)
  if (!vocab_->contains(w)) {
    throw NotInVocabulary("token " + nlohmann::json(w.str()).dump() +
                          " is not in the vocabulary of " + model_id_);
  }
  const Table& table = resolve(ctx);
  auto it = table.find(w);
  return it == table.end() ? Probability(0.0) : it->second;
}

FullDistribution ScriptedBackend::full_distribution(const GenerationContext& ctx) {
  return FullDistribution{model_id_, vocab_, resolve(ctx)};
}

std::shared_ptr<ScriptedBackend> load_scripted_backend(
    const std::filesystem::path& script_path,
    std::shared_ptr<const Vocab> vocab) {
  std::ifstream in(script_path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open script file " + script_path.string());
  }
  nlohmann::json doc =
      nlohmann::json::parse(in, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ParseError("script file " + script_path.string() +
                     " is not a JSON object");
  }

  auto parse_table = [&](const nlohmann::json& j) {
    if (!j.is_object()) {
      throw ParseError("script table must be an object of token -> prob");
    }
    ScriptedBackend::Table table;
    for (const auto& [token, prob] : j.items()) {
      if (token.empty() || !prob.is_number()) {
        throw ParseError("bad table entry for token " +
                         nlohmann::json(token).dump());
      }
      try {
        table.emplace(TokenText(token), Probability(prob.get<double>()));
      } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("bad table entry: ") + e.what());
      }
    }
    return table;
  };

  std::string model_id = doc.value("model_id", std::string{});
  if (model_id.empty()) {
    throw ParseError("script file " + script_path.string() +
                     " is missing model_id");
  }

  std::unordered_map<std::string, ScriptedBackend::Table> contexts;
  if (doc.contains("contexts")) {
    for (const auto& [ctx, table] : doc.at("contexts").items()) {
      contexts.emplace(ctx, parse_table(table));
    }
  }
  std::optional<ScriptedBackend::Table> fallback;
  if (doc.contains("fallback")) {
    fallback = parse_table(doc.at("fallback"));
  }

  return std::make_shared<ScriptedBackend>(std::move(model_id), std::move(vocab),
                                           std::move(contexts),
                                           std::move(fallback));
}

}  // namespace unite
