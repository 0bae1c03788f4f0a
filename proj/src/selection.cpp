#include "unite/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unite {

namespace {

double score_for(const ModelProfile& profile, const std::string& task) {
  const auto it = profile.scores.find(task);
  if (it == profile.scores.end()) {
    throw MissingScore(profile.model_id, task);
  }
  return it->second;
}

}  // namespace

std::string check_name(CompatCheck check) {
  switch (check) {
    case CompatCheck::performance_gap:
      return "performance_gap";
    case CompatCheck::response_style:
      return "response_style";
  }
  return "unknown";
}

CompatibilityReport compatible_pair(const ModelProfile& a,
                                    const ModelProfile& b,
                                    const std::string& task,
                                    double gap_threshold,
                                    double length_ratio_max) {
  const double score_a = score_for(a, task);
  const double score_b = score_for(b, task);
  if (a.mean_response_length <= 0.0 || b.mean_response_length <= 0.0) {
    throw ConfigError("mean_response_length", "must be positive");
  }

  CompatibilityReport report;
  report.perf_gap = std::abs(score_a - score_b);
  report.length_ratio =
      std::max(a.mean_response_length, b.mean_response_length) /
      std::min(a.mean_response_length, b.mean_response_length);
  if (report.perf_gap > gap_threshold) {
    report.failed_checks.push_back(CompatCheck::performance_gap);
  }
  if (report.length_ratio > length_ratio_max) {
    report.failed_checks.push_back(CompatCheck::response_style);
  }
  report.compatible = report.failed_checks.empty();
  return report;
}

std::vector<ModelProfile> select_ensemble(const std::vector<ModelProfile>& pool,
                                          const std::string& task, int max_n,
                                          double gap_threshold,
                                          double length_ratio_max,
                                          CompatibilityMode mode) {
  if (pool.empty()) {
    throw ConfigError("pool", "must be non-empty");
  }
  if (max_n < 1) {
    throw ConfigError("max_n", "must be >= 1, got " + std::to_string(max_n));
  }
  // Surface a missing score for ANY pool member up front, not just for
  // members the greedy walk happens to reach.
  for (const ModelProfile& profile : pool) {
    score_for(profile, task);
  }

  std::vector<const ModelProfile*> candidates;
  candidates.reserve(pool.size());
  for (const ModelProfile& profile : pool) {
    candidates.push_back(&profile);
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](const ModelProfile* x, const ModelProfile* y) {
              const double sx = score_for(*x, task);
              const double sy = score_for(*y, task);
              if (sx != sy) {
                return sx > sy;
              }
              return x->model_id < y->model_id;
            });

  std::vector<ModelProfile> selected{*candidates.front()};
  candidates.erase(candidates.begin());

  while (static_cast<int>(selected.size()) < max_n && !candidates.empty()) {
    auto qualifies = [&](const ModelProfile& candidate) {
      if (mode == CompatibilityMode::primary_only) {
        return compatible_pair(selected.front(), candidate, task,
                               gap_threshold, length_ratio_max)
            .compatible;
      }
      return std::all_of(selected.begin(), selected.end(),
                         [&](const ModelProfile& member) {
                           return compatible_pair(member, candidate, task,
                                                  gap_threshold,
                                                  length_ratio_max)
                               .compatible;
                         });
    };
    const auto next =
        std::find_if(candidates.begin(), candidates.end(),
                     [&](const ModelProfile* c) { return qualifies(*c); });
    if (next == candidates.end()) {
      break;  // no further suitable models
    }
    selected.push_back(**next);
    candidates.erase(next);
  }
  return selected;
}

}  // namespace unite
