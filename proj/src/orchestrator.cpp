#include "unite/orchestrator.hpp"

#include <chrono>
#include <future>
#include <random>
#include <thread>

#include "unite/alignment.hpp"

namespace unite {

namespace {

StepDistribution step_with_retry(Backend& backend, const GenerationContext& ctx,
                                 int k, const RetryPolicy& retry) {
  int backoff_ms = retry.backoff_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      return backend.step(ctx, k);
    } catch (const BackendUnavailable&) {
      if (attempt >= retry.retries) {
        throw;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
}

std::vector<StepDistribution> fan_out(
    const std::vector<EnsembleMember>& members, const GenerationContext& ctx,
    int k, const RetryPolicy& retry) {
  std::vector<std::future<StepDistribution>> futures;
  futures.reserve(members.size());
  for (const EnsembleMember& member : members) {
    futures.push_back(std::async(std::launch::async, [&member, &ctx, k,
                                                      &retry] {
      return step_with_retry(*member.backend, ctx, k, retry);
    }));
  }
  std::vector<StepDistribution> dists;
  dists.reserve(members.size());
  // Collect in member order; a failure in any future still drains the rest
  // so no std::future blocks in its destructor while holding work.
  std::exception_ptr first_failure;
  for (auto& future : futures) {
    try {
      dists.push_back(future.get());
    } catch (...) {
      if (!first_failure) {
        first_failure = std::current_exception();
      }
    }
  }
  if (first_failure) {
    std::rethrow_exception(first_failure);
  }
  return dists;
}

}  // namespace

std::optional<StopReason> stop(const DecodeTrace& so_far,
                               const EnsembleConfig& cfg,
                               const std::optional<TokenText>& primary_eos) {
  if (!so_far.steps.empty()) {
    const TokenText& last = so_far.steps.back().chosen;
    if (primary_eos && last == *primary_eos) {
      return StopReason::eos;
    }
    if (cfg.stop_tokens.contains(last)) {
      return StopReason::stop_token;
    }
  }
  if (static_cast<int>(so_far.steps.size()) >= cfg.max_new_tokens) {
    return StopReason::max_tokens;
  }
  return std::nullopt;
}

DecodeTrace generate(const std::string& prompt,
                     const std::vector<EnsembleMember>& members,
                     const EnsembleConfig& cfg, RetryPolicy retry) {
  std::vector<ModelProfile> profiles;
  std::vector<std::shared_ptr<Backend>> backends;
  profiles.reserve(members.size());
  backends.reserve(members.size());
  for (const EnsembleMember& member : members) {
    profiles.push_back(member.profile);
    backends.push_back(member.backend);
  }
  validate_config(cfg, profiles);
  if (prompt.empty()) {
    throw ConfigError("prompt", "must be non-empty");
  }

  std::optional<TokenText> primary_eos;
  for (const ModelProfile& profile : profiles) {
    if (profile.model_id == cfg.primary_model) {
      primary_eos = profile.eos_token;
    }
  }

  std::optional<std::mt19937_64> rng;
  if (const auto* sample = std::get_if<TopKSample>(&cfg.selection_policy)) {
    rng.emplace(sample->seed);
  }

  DecodeTrace trace;
  trace.prompt = prompt;
  trace.n_models = static_cast<int>(members.size());
  trace.k = cfg.k;

  GenerationContext ctx(prompt);
  for (;;) {
    std::vector<StepDistribution> dists;
    try {
      dists = fan_out(members, ctx, cfg.k, retry);
    } catch (const std::exception& e) {
      throw GenerationAborted(std::string("decode aborted: ") + e.what(),
                              std::move(trace));
    }

    auto [chosen, record] =
        ensemble_step(dists, profiles, backends, ctx, cfg, rng ? &*rng : nullptr);
    trace.steps.push_back(std::move(record));

    ctx.append(chosen);

    const std::optional<StopReason> reason = stop(trace, cfg, primary_eos);
    if (reason == StopReason::eos || reason == StopReason::stop_token) {
      trace.stop_reason = *reason;
      break;
    }
    trace.output_text += chosen.str();
    if (reason) {
      trace.stop_reason = *reason;
      break;
    }
  }
  return trace;
}

}  // namespace unite
