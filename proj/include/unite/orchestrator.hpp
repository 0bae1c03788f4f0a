#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "unite/backend.hpp"
#include "unite/trace.hpp"
#include "unite/types.hpp"

namespace unite {

// Raised when a backend keeps failing after the configured retries. Carries
// everything decoded before the failure so callers can persist it.
class GenerationAborted : public Error {
 public:
  GenerationAborted(const std::string& what, DecodeTrace partial)
      : Error(what), partial_(std::move(partial)) {
    partial_.stop_reason = StopReason::aborted;
  }
  const DecodeTrace& partial_trace() const noexcept { return partial_; }

 private:
  DecodeTrace partial_;
};

struct EnsembleMember {
  ModelProfile profile;
  std::shared_ptr<Backend> backend;
};

struct RetryPolicy {
  int retries = 2;      // extra attempts after the first failure
  int backoff_ms = 50;  // initial backoff, doubled per retry
};

// Stop decision over the trace so far: the primary member's end-of-sequence
// token ends the run first, then configured stop tokens, then the
// max_new_tokens budget. Returns nullopt while decoding should continue.
std::optional<StopReason> stop(const DecodeTrace& so_far,
                               const EnsembleConfig& cfg,
                               const std::optional<TokenText>& primary_eos);

// The decode loop: repeatedly fans out one step() call per member
// concurrently, joins, runs the ensemble kernel, appends the chosen token to
// the shared context, and re-checks the stop conditions. BackendUnavailable
// is retried per `retry`; any terminal backend failure raises
// GenerationAborted carrying the partial trace.
//
// output_text collects every chosen token except a terminal eos/stop token.
// With scripted or replay backends and greedy selection (or a fixed sampling
// seed) the returned trace is bit-reproducible and invariant to member order.
DecodeTrace generate(const std::string& prompt,
                     const std::vector<EnsembleMember>& members,
                     const EnsembleConfig& cfg, RetryPolicy retry = {});

}  // namespace unite
