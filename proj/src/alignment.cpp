#include "unite/alignment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace unite {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::top_k:
      return "top_k";
    case Provenance::vocab_lookup:
      return "vocab_lookup";
    case Provenance::retokenized_first_subtoken:
      return "retokenized_first_subtoken";
  }
  return "unknown";
}

std::vector<TokenText> build_union(const std::vector<StepDistribution>& dists) {
  if (dists.empty()) {
    throw std::invalid_argument("build_union requires at least one distribution");
  }
  // max() is order-independent, so the map content — and with the sort below
  // the final ordering — does not depend on the order of `dists`.
  std::unordered_map<TokenText, double> max_prob;
  for (const StepDistribution& dist : dists) {
    for (const TokenEntry& entry : dist.topk) {
      auto [it, inserted] = max_prob.try_emplace(entry.token, entry.prob.value());
      if (!inserted) {
        it->second = std::max(it->second, entry.prob.value());
      }
    }
  }
  std::vector<TokenText> result;
  result.reserve(max_prob.size());
  for (const auto& [token, prob] : max_prob) {
    (void)prob;
    result.push_back(token);
  }
  std::sort(result.begin(), result.end(),
            [&](const TokenText& a, const TokenText& b) {
              const double pa = max_prob.at(a);
              const double pb = max_prob.at(b);
              if (pa != pb) {
                return pa > pb;
              }
              return a < b;
            });
  return result;
}

ExpandedRow expand_model(const std::vector<TokenText>& union_tokens,
                         const StepDistribution& dist,
                         const ModelProfile& profile, Backend& backend,
                         const GenerationContext& ctx,
                         Probability missing_prob_floor) {
  if (union_tokens.empty()) {
    throw std::invalid_argument("expand_model requires a non-empty union");
  }
  std::unordered_map<TokenText, Probability> topk_index;
  topk_index.reserve(dist.topk.size());
  for (const TokenEntry& entry : dist.topk) {
    topk_index.emplace(entry.token, entry.prob);
  }

  ExpandedRow row;
  row.probs.reserve(union_tokens.size());
  row.provenance.reserve(union_tokens.size());
  for (const TokenText& w : union_tokens) {
    if (const auto it = topk_index.find(w); it != topk_index.end()) {
      row.probs.push_back(it->second);
      row.provenance.push_back(Provenance::top_k);
    } else if (profile.vocab->contains(w)) {
      row.probs.push_back(backend.prob_of(ctx, w, missing_prob_floor));
      row.provenance.push_back(Provenance::vocab_lookup);
    } else {
      const std::vector<TokenText> sub = profile.tokenizer->tokenize(w);
      const TokenText& first = sub.front();
      if (const auto it = topk_index.find(first); it != topk_index.end()) {
        row.probs.push_back(it->second);
      } else {
        row.probs.push_back(backend.prob_of(ctx, first, missing_prob_floor));
      }
      row.provenance.push_back(Provenance::retokenized_first_subtoken);
    }
  }
  return row;
}

AlignedMatrix normalize_rows(AlignedMatrix m, NormalizationMode mode) {
  if (m.probs.empty() || m.union_tokens.empty()) {
    throw std::invalid_argument("normalize_rows requires a non-empty matrix");
  }
  for (std::vector<Probability>& row : m.probs) {
    if (row.size() != m.union_tokens.size()) {
      throw std::invalid_argument("matrix row length does not match union size");
    }
    if (mode == NormalizationMode::softmax) {
      double max_value = row.front().value();
      for (const Probability& p : row) {
        max_value = std::max(max_value, p.value());
      }
      double sum = 0.0;
      std::vector<double> exps(row.size());
      for (std::size_t j = 0; j < row.size(); ++j) {
        exps[j] = std::exp(row[j].value() - max_value);
        sum += exps[j];
      }
      for (std::size_t j = 0; j < row.size(); ++j) {
        row[j] = Probability(exps[j] / sum);
      }
    } else {
      double sum = 0.0;
      for (const Probability& p : row) {
        sum += p.value();
      }
      if (sum == 0.0) {
        const double uniform = 1.0 / static_cast<double>(row.size());
        for (Probability& p : row) {
          p = Probability(uniform);
        }
      } else {
        for (Probability& p : row) {
          p = Probability(std::min(1.0, p.value() / sum));
        }
      }
    }
  }
  return m;
}

std::vector<Probability> aggregate(const AlignedMatrix& normalized) {
  if (normalized.probs.empty()) {
    throw std::invalid_argument("aggregate requires at least one row");
  }
  const std::size_t n = normalized.probs.size();
  const std::size_t width = normalized.union_tokens.size();
  std::vector<Probability> avg;
  avg.reserve(width);
  std::vector<double> column(n);
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = normalized.probs[i][j].value();
    }
    // Summation order must not depend on model order, or permuting the
    // member list could flip near-tied argmaxes by a rounding ulp.
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (const double v : column) {
      sum += v;
    }
    avg.push_back(Probability(std::min(1.0, sum / static_cast<double>(n))));
  }
  return avg;
}

namespace {

TokenText sample_top_k(const std::vector<Probability>& avg,
                       const std::vector<TokenText>& union_tokens,
                       const TopKSample& policy, std::mt19937_64* rng) {
  if (policy.sample_k < 1) {
    throw std::invalid_argument("sample_k must be >= 1");
  }
  std::vector<std::size_t> order(avg.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    order[j] = j;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (avg[a].value() != avg[b].value()) {
      return avg[a].value() > avg[b].value();
    }
    return union_tokens[a] < union_tokens[b];
  });
  const std::size_t m =
      std::min(static_cast<std::size_t>(policy.sample_k), order.size());

  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    total += avg[order[r]].value();
  }
  std::mt19937_64 local(policy.seed);
  std::mt19937_64& gen = rng ? *rng : local;
  // 53-bit mantissa draw in [0,1): bit-exact across platforms, unlike
  // std::uniform_real_distribution.
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;

  if (total == 0.0) {
    // All candidate mass is zero; fall back to the deterministic head.
    return union_tokens[order[0]];
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    acc += avg[order[r]].value() / total;
    if (u < acc) {
      return union_tokens[order[r]];
    }
  }
  return union_tokens[order[m - 1]];  // guard against rounding shortfall
}

}  // namespace

TokenText select_next(const std::vector<Probability>& avg,
                      const std::vector<TokenText>& union_tokens,
                      const SelectionPolicy& policy, std::mt19937_64* rng) {
  if (avg.empty() || avg.size() != union_tokens.size()) {
    throw std::invalid_argument(
        "select_next requires matching non-empty avg and union");
  }
  if (const auto* sample = std::get_if<TopKSample>(&policy)) {
    return sample_top_k(avg, union_tokens, *sample, rng);
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < avg.size(); ++j) {
    if (avg[j].value() > avg[best].value() ||
        (avg[j].value() == avg[best].value() &&
         union_tokens[j] < union_tokens[best])) {
      best = j;
    }
  }
  return union_tokens[best];
}

std::pair<TokenText, StepRecord> ensemble_step(
    const std::vector<StepDistribution>& dists,
    const std::vector<ModelProfile>& profiles,
    const std::vector<std::shared_ptr<Backend>>& backends,
    const GenerationContext& ctx, const EnsembleConfig& cfg,
    std::mt19937_64* rng) {
  if (dists.empty() || dists.size() != profiles.size() ||
      dists.size() != backends.size()) {
    throw std::invalid_argument(
        "ensemble_step requires aligned dists/profiles/backends");
  }
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (dists[i].model_id != profiles[i].model_id) {
      throw ProtocolError("distribution for " + dists[i].model_id +
                          " paired with profile " + profiles[i].model_id);
    }
  }

  const auto start = std::chrono::steady_clock::now();

  AlignedMatrix matrix;
  matrix.union_tokens = build_union(dists);
  matrix.probs.reserve(dists.size());
  matrix.provenance.reserve(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) {
    ExpandedRow row = expand_model(matrix.union_tokens, dists[i], profiles[i],
                                   *backends[i], ctx, cfg.missing_prob_floor);
    matrix.probs.push_back(std::move(row.probs));
    matrix.provenance.push_back(std::move(row.provenance));
  }

  matrix = normalize_rows(std::move(matrix));
  const std::vector<Probability> avg = aggregate(matrix);
  TokenText chosen =
      select_next(avg, matrix.union_tokens, cfg.selection_policy, rng);

  const auto end = std::chrono::steady_clock::now();

  std::map<std::string, int> provenance_counts = {
      {provenance_name(Provenance::top_k), 0},
      {provenance_name(Provenance::vocab_lookup), 0},
      {provenance_name(Provenance::retokenized_first_subtoken), 0}};
  for (const std::vector<Provenance>& row : matrix.provenance) {
    for (const Provenance p : row) {
      ++provenance_counts[provenance_name(p)];
    }
  }

  const int union_size = static_cast<int>(matrix.union_tokens.size());
  StepRecord record{
      .union_size = union_size,
      .tokens_manipulated = static_cast<int>(dists.size()) * union_size,
      .chosen = chosen,
      .provenance_counts = std::move(provenance_counts),
      .wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                          end - start)
                          .count(),
  };
  return {std::move(chosen), std::move(record)};
}

}  // namespace unite
