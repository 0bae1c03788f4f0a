#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "unite/backend.hpp"

namespace unite {

struct HttpBackendOptions {
  int timeout_ms = 5000;
  // Transport retries performed inside the backend itself before a
  // BackendUnavailable escapes. The decode loop layers its own retry policy
  // on top, so this defaults to none.
  int retries = 0;
  int backoff_ms = 100;  // initial backoff, doubled per retry
};

// Remote model speaking the step protocol: POST {base_url}/v1/step with JSON
// body {"context": <text>, "k": <int>} and JSON response
// {"entries": [{"token": <text>, "prob": <number>}, ...], "model_id": <id>}.
//
// Transport failures and non-2xx statuses raise BackendUnavailable
// (retryable); malformed or out-of-contract responses raise ProtocolError.
// Responses are sorted by descending probability (ties by ascending token
// byte order) and padded with zero-probability vocabulary tokens when the
// server returns fewer than min(k, vocab size) entries, so the top-k shape
// invariant holds regardless of server behaviour.
//
// Point lookups are answered from the most recent response for the same
// context; tokens the server never priced degrade to the caller's floor.
class HttpBackend : public Backend {
 public:
  HttpBackend(std::string model_id, const std::string& base_url,
              std::shared_ptr<const Vocab> vocab,
              HttpBackendOptions options = {});
  ~HttpBackend() override;

  HttpBackend(const HttpBackend&) = delete;
  HttpBackend& operator=(const HttpBackend&) = delete;

  StepDistribution step(const GenerationContext& ctx, int k) override;
  Probability prob_of(const GenerationContext& ctx, const TokenText& token,
                      Probability floor) override;
  const std::string& model_id() const override { return model_id_; }
  std::shared_ptr<const Vocab> vocab() const override { return vocab_; }

 private:
  struct Impl;  // hides the vendored HTTP client from this header

  std::string post_step(const std::string& body);

  std::string model_id_;
  std::shared_ptr<const Vocab> vocab_;
  HttpBackendOptions options_;
  std::unique_ptr<Impl> impl_;
  std::vector<TokenText> sorted_tokens_;

  // Priced tokens of recent responses, keyed by context hash.
  std::unordered_map<std::string, std::unordered_map<TokenText, Probability>>
      response_cache_;
  std::mutex mu_;
};

}  // namespace unite
