#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unite/backend.hpp"
#include "unite/orchestrator.hpp"
#include "unite/trace.hpp"
#include "unite/types.hpp"

namespace unite {

// The chosen token of one full-union zero-fill step: union of the members'
// ENTIRE vocabularies, a token absent from a member's vocabulary (or priced
// zero by it) contributes 0, columns are averaged raw — deliberately without
// the re-softmax — and the argmax wins with the usual ascending-byte-order
// tie-break.
TokenText zero_fill_step(const std::vector<FullDistribution>& dists,
                         const std::vector<ModelProfile>& profiles);

// Same, plus the step accounting (union_size = full union vocabulary size,
// tokens_manipulated = n x that, kernel wall time).
std::pair<TokenText, StepRecord> zero_fill_step_recorded(
    const std::vector<FullDistribution>& dists,
    const std::vector<ModelProfile>& profiles);

// Decode loop around zero_fill_step with the same stop conditions as
// generate(). Every member's backend must be able to enumerate its full
// distribution (UnsupportedBackend otherwise — e.g. HTTP backends).
// Single-threaded by design so step timings stay honest.
DecodeTrace zero_fill_generate(const std::string& prompt,
                               const std::vector<EnsembleMember>& members,
                               const EnsembleConfig& cfg);

// Independent re-statement of the union-top-k step, written directly from
// the method description with no code shared with the alignment module.
// Exists solely as a differential-testing oracle for ensemble_step.
TokenText naive_oracle_step(const std::vector<StepDistribution>& dists,
                            const std::vector<ModelProfile>& profiles,
                            const std::vector<std::shared_ptr<Backend>>& backends,
                            const GenerationContext& ctx,
                            const EnsembleConfig& cfg);

enum class Method {
  unite,
  zero_fill_full_union,
  naive_oracle,
};

std::string method_name(Method method);

struct EfficiencyReport {
  double mean_tokens_manipulated = 0.0;
  double mean_union_size = 0.0;
  std::int64_t mean_step_latency_ns = 0;
  int n_models = 0;
  int k = 0;
  Method method = Method::unite;

  // Accounting detail.
  int traces_used = 0;
  int traces_skipped = 0;  // traces with no steps, skipped with a warning
  int total_steps = 0;
};

// Arithmetic means over all steps of all traces. Sums are taken in exact
// integer arithmetic, so the result is invariant to trace order. Traces with
// empty step lists are skipped and counted in traces_skipped. Throws
// std::invalid_argument when `traces` itself is empty.
EfficiencyReport report(const std::vector<DecodeTrace>& traces, Method method);

nlohmann::json report_to_json(const EfficiencyReport& report);

// Fixed-width human-readable rendering (for stderr).
std::string report_to_table(const EfficiencyReport& report);

}  // namespace unite
