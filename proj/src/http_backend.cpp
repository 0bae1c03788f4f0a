#include "unite/http_backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <thread>
#include <unordered_set>
#include <utility>

#include "unite/util.hpp"

namespace unite {

struct HttpBackend::Impl {
  explicit Impl(const std::string& base_url) : client(base_url) {}
  httplib::Client client;
};

HttpBackend::HttpBackend(std::string model_id, const std::string& base_url,
                         std::shared_ptr<const Vocab> vocab,
                         HttpBackendOptions options)
    : model_id_(std::move(model_id)),
      vocab_(std::move(vocab)),
      options_(options),
      impl_(std::make_unique<Impl>(base_url)) {
  if (model_id_.empty()) {
    throw ConfigError("model_id", "must be non-empty");
  }
  if (!vocab_) {
    throw std::invalid_argument("HttpBackend requires a vocabulary");
  }
  if (options_.timeout_ms < 1) {
    throw ConfigError("timeout_ms", "must be >= 1");
  }
  if (options_.retries < 0) {
    throw ConfigError("retries", "must be >= 0");
  }
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout);
  impl_->client.set_write_timeout(timeout);
  impl_->client.set_keep_alive(true);
  sorted_tokens_ = vocab_->tokens();
  std::sort(sorted_tokens_.begin(), sorted_tokens_.end());
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::post_step(const std::string& body) {
  int attempt = 0;
  int backoff_ms = options_.backoff_ms;
  for (;;) {
    std::string failure;
    {
      httplib::Result res =
          impl_->client.Post("/v1/step", body, "application/json");
      if (res) {
        if (res->status >= 200 && res->status < 300) {
          return res->body;
        }
        failure = "HTTP status " + std::to_string(res->status) + " from " +
                  model_id_;
      } else {
        failure = "transport error talking to " + model_id_ + ": " +
                  httplib::to_string(res.error());
      }
    }
    if (attempt >= options_.retries) {
      throw BackendUnavailable(failure);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
    backoff_ms *= 2;
    ++attempt;
  }
}

StepDistribution HttpBackend::step(const GenerationContext& ctx, int k) {
  if (k < 1) {
    throw std::invalid_argument("k must be >= 1");
  }
  const nlohmann::json request = {{"context", ctx.text()}, {"k", k}};
  std::string body;
  {
    std::lock_guard<std::mutex> lock(mu_);
    body = post_step(request.dump());
  }

  nlohmann::json doc =
      nlohmann::json::parse(body, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("entries") ||
      !doc["entries"].is_array()) {
    throw ProtocolError("malformed step response from " + model_id_);
  }
  if (!doc.contains("model_id") || !doc["model_id"].is_string() ||
      doc["model_id"].get<std::string>() != model_id_) {
    throw ProtocolError("step response model_id does not match " + model_id_);
  }

  std::vector<TokenEntry> entries;
  std::unordered_map<TokenText, Probability> lookup;
  std::unordered_set<std::string> seen;
  for (const auto& e : doc["entries"]) {
    if (!e.is_object() || !e.contains("token") || !e["token"].is_string() ||
        !e.contains("prob") || !e["prob"].is_number()) {
      throw ProtocolError("malformed entry in step response from " + model_id_);
    }
    const std::string token = e["token"].get<std::string>();
    if (token.empty() || !seen.insert(token).second) {
      throw ProtocolError("empty or duplicate token in step response from " +
                          model_id_);
    }
    if (!vocab_->contains(std::string_view(token))) {
      throw ProtocolError("step response from " + model_id_ +
                          " names a token outside its vocabulary: " +
                          nlohmann::json(token).dump());
    }
    Probability prob;
    try {
      prob = Probability(e["prob"].get<double>());
    } catch (const std::invalid_argument& err) {
      throw ProtocolError("bad probability in step response from " +
                          model_id_ + ": " + err.what());
    }
    entries.push_back({TokenText(token), prob});
    lookup.emplace(TokenText(token), prob);
  }
  if (entries.empty()) {
    throw ProtocolError("empty entries in step response from " + model_id_);
  }

  std::sort(entries.begin(), entries.end(),
            [](const TokenEntry& a, const TokenEntry& b) {
              if (a.prob.value() != b.prob.value()) {
                return a.prob.value() > b.prob.value();
              }
              return a.token < b.token;
            });
  const std::size_t want =
      std::min(static_cast<std::size_t>(k), vocab_->size());
  if (entries.size() > want) {
    entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(want),
                  entries.end());
  } else if (entries.size() < want) {
    for (const TokenText& t : sorted_tokens_) {
      if (entries.size() >= want) {
        break;
      }
      if (!lookup.contains(t)) {
        entries.push_back({t, Probability(0.0)});
      }
    }
  }

  {
    std::lock_guard<std::mutex> lock(mu_);
    if (response_cache_.size() >= 256) {
      response_cache_.clear();
    }
    response_cache_[sha256_hex(ctx.text())] = lookup;
  }
  return StepDistribution{model_id_, std::move(entries), std::move(lookup)};
}

Probability HttpBackend::prob_of(const GenerationContext& ctx,
                                 const TokenText& token, Probability floor) {
  if (!vocab_->contains(token)) {
    throw NotInVocabulary("token " + nlohmann::json(token.str()).dump() +
                          " is not in the vocabulary of " + model_id_);
  }
  std::lock_guard<std::mutex> lock(mu_);
  const auto cached = response_cache_.find(sha256_hex(ctx.text()));
  if (cached == response_cache_.end()) {
    return floor;
  }
  const auto it = cached->second.find(token);
  return it == cached->second.end() ? floor : it->second;
}

}  // namespace unite
