#include "unite/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace unite {

std::pair<TokenText, StepRecord> zero_fill_step_recorded(
    const std::vector<FullDistribution>& dists,
    const std::vector<ModelProfile>& profiles) {
  if (dists.empty() || dists.size() != profiles.size()) {
    throw std::invalid_argument(
        "zero_fill_step requires aligned dists/profiles");
  }
  const auto start = std::chrono::steady_clock::now();

  // Union of the members' entire vocabularies, in byte order.
  std::set<TokenText> union_set;
  for (const FullDistribution& dist : dists) {
    for (const TokenText& token : dist.vocab->tokens()) {
      union_set.insert(token);
    }
  }
  if (union_set.empty()) {
    throw std::invalid_argument("zero_fill_step requires non-empty vocabularies");
  }

  // Honest dense pass: every model prices every union token (absent -> 0),
  // since that per-cell work is exactly what the efficiency metric counts.
  const std::size_t n = dists.size();
  TokenText best = *union_set.begin();
  double best_avg = -1.0;
  for (const TokenText& token : union_set) {
    double sum = 0.0;
    for (const FullDistribution& dist : dists) {
      const auto it = dist.nonzero.find(token);
      if (it != dist.nonzero.end()) {
        sum += it->second.value();
      }
    }
    const double avg = sum / static_cast<double>(n);
    if (avg > best_avg || (avg == best_avg && token < best)) {
      best = token;
      best_avg = avg;
    }
  }

  const auto end = std::chrono::steady_clock::now();
  const int union_size = static_cast<int>(union_set.size());
  StepRecord record{
      .union_size = union_size,
      .tokens_manipulated = static_cast<int>(n) * union_size,
      .chosen = best,
      .provenance_counts = {},
      .wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          end - start)
                          .count(),
  };
  return {std::move(best), std::move(record)};
}

TokenText zero_fill_step(const std::vector<FullDistribution>& dists,
                         const std::vector<ModelProfile>& profiles) {
  return zero_fill_step_recorded(dists, profiles).first;
}

DecodeTrace zero_fill_generate(const std::string& prompt,
                               const std::vector<EnsembleMember>& members,
                               const EnsembleConfig& cfg) {
  std::vector<ModelProfile> profiles;
  profiles.reserve(members.size());
  for (const EnsembleMember& member : members) {
    profiles.push_back(member.profile);
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

  DecodeTrace trace;
  trace.prompt = prompt;
  trace.n_models = static_cast<int>(members.size());
  trace.k = cfg.k;

  GenerationContext ctx(prompt);
  for (;;) {
    std::vector<FullDistribution> dists;
    dists.reserve(members.size());
    for (const EnsembleMember& member : members) {
      dists.push_back(member.backend->full_distribution(ctx));
    }
    auto [chosen, record] = zero_fill_step_recorded(dists, profiles);
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

TokenText naive_oracle_step(const std::vector<StepDistribution>& dists,
                            const std::vector<ModelProfile>& profiles,
                            const std::vector<std::shared_ptr<Backend>>& backends,
                            const GenerationContext& ctx,
                            const EnsembleConfig& cfg) {
  if (dists.empty() || dists.size() != profiles.size() ||
      dists.size() != backends.size()) {
    throw std::invalid_argument(
        "naive_oracle_step requires aligned dists/profiles/backends");
  }

  // Union the top-k token texts, remembering each token's best probability
  // so the list can be ordered the documented way (best first, ties by
  // ascending bytes).
  std::map<TokenText, double> best_prob;
  for (const StepDistribution& dist : dists) {
    for (const TokenEntry& entry : dist.topk) {
      const auto it = best_prob.find(entry.token);
      if (it == best_prob.end() || entry.prob.value() > it->second) {
        best_prob[entry.token] = entry.prob.value();
      }
    }
  }
  std::vector<TokenText> union_tokens;
  for (const auto& [token, prob] : best_prob) {
    (void)prob;
    union_tokens.push_back(token);
  }
  std::stable_sort(union_tokens.begin(), union_tokens.end(),
                   [&](const TokenText& a, const TokenText& b) {
                     return best_prob.at(a) > best_prob.at(b);
                   });

  // Per model: assign every union token a probability via the three rules,
  // then softmax the row.
  const std::size_t n = dists.size();
  const std::size_t width = union_tokens.size();
  std::vector<std::vector<double>> rows(n, std::vector<double>(width, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::map<TokenText, double> in_topk;
    for (const TokenEntry& entry : dists[i].topk) {
      in_topk[entry.token] = entry.prob.value();
    }
    for (std::size_t j = 0; j < width; ++j) {
      const TokenText& w = union_tokens[j];
      double p;
      if (in_topk.count(w) != 0) {
        p = in_topk[w];  // rule 1: already in this model's top-k
      } else if (profiles[i].vocab->contains(w)) {
        // rule 2: in the vocabulary, ask the model for its probability
        p = backends[i]->prob_of(ctx, w, cfg.missing_prob_floor).value();
      } else {
        // rule 3: re-tokenize and use the first piece's probability
        const TokenText first = profiles[i].tokenizer->tokenize(w).front();
        if (in_topk.count(first) != 0) {
          p = in_topk[first];
        } else {
          p = backends[i]->prob_of(ctx, first, cfg.missing_prob_floor).value();
        }
      }
      rows[i][j] = p;
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      denom += std::exp(rows[i][j]);
    }
    for (std::size_t j = 0; j < width; ++j) {
      rows[i][j] = std::exp(rows[i][j]) / denom;
    }
  }

  // Average the rows and take the argmax (smallest byte order on ties).
  std::size_t best = 0;
  double best_avg = -1.0;
  for (std::size_t j = 0; j < width; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += rows[i][j];
    }
    const double avg = sum / static_cast<double>(n);
    if (avg > best_avg ||
        (avg == best_avg && union_tokens[j] < union_tokens[best])) {
      best = j;
      best_avg = avg;
    }
  }
  return union_tokens[best];
}

std::string method_name(Method method) {
  switch (method) {
    case Method::unite:
      return "unite";
    case Method::zero_fill_full_union:
      return "zero_fill_full_union";
    case Method::naive_oracle:
      return "naive_oracle";
  }
  return "unknown";
}

EfficiencyReport report(const std::vector<DecodeTrace>& traces, Method method) {
  if (traces.empty()) {
    throw std::invalid_argument("report requires at least one trace");
  }
  EfficiencyReport out;
  out.method = method;

  // Integer sums keep the means exactly permutation-invariant.
  std::int64_t cells = 0;
  std::int64_t union_sizes = 0;
  std::int64_t latency = 0;
  std::int64_t steps = 0;
  for (const DecodeTrace& trace : traces) {
    if (trace.steps.empty()) {
      ++out.traces_skipped;
      continue;
    }
    ++out.traces_used;
    if (out.n_models == 0) {
      out.n_models = trace.n_models;
      out.k = trace.k;
    }
    for (const StepRecord& step : trace.steps) {
      cells += step.tokens_manipulated;
      union_sizes += step.union_size;
      latency += step.wall_time_ns;
      ++steps;
    }
  }
  out.total_steps = static_cast<int>(steps);
  if (steps > 0) {
    out.mean_tokens_manipulated =
        static_cast<double>(cells) / static_cast<double>(steps);
    out.mean_union_size =
        static_cast<double>(union_sizes) / static_cast<double>(steps);
    out.mean_step_latency_ns = latency / steps;
  }
  return out;
}

nlohmann::json report_to_json(const EfficiencyReport& report) {
  return {{"method", method_name(report.method)},
          {"mean_tokens_manipulated", report.mean_tokens_manipulated},
          {"mean_union_size", report.mean_union_size},
          {"mean_step_latency_ns", report.mean_step_latency_ns},
          {"n_models", report.n_models},
          {"k", report.k},
          {"traces_used", report.traces_used},
          {"traces_skipped", report.traces_skipped},
          {"total_steps", report.total_steps}};
}

std::string report_to_table(const EfficiencyReport& report) {
  std::ostringstream out;
  out << "method                    " << method_name(report.method) << "\n"
      << "n_models / k              " << report.n_models << " / " << report.k
      << "\n"
      << "traces (used / skipped)   " << report.traces_used << " / "
      << report.traces_skipped << "\n"
      << "total steps               " << report.total_steps << "\n"
      << "mean union size           " << report.mean_union_size << "\n"
      << "mean tokens manipulated   " << report.mean_tokens_manipulated << "\n"
      << "mean step latency (ns)    " << report.mean_step_latency_ns << "\n";
  return out.str();
}

}  // namespace unite
