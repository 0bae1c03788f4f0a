#pragma once

#include <string>
#include <vector>

#include "unite/types.hpp"

namespace unite {

enum class CompatCheck {
  performance_gap,  // accuracy gap above the threshold
  response_style,   // response-length ratio above the threshold
};

std::string check_name(CompatCheck check);

struct CompatibilityReport {
  bool compatible = false;
  double perf_gap = 0.0;      // absolute accuracy points
  double length_ratio = 1.0;  // max(len)/min(len), always >= 1
  std::vector<CompatCheck> failed_checks;
};

// Pairwise gate: models ensemble well when their task accuracies are within
// gap_threshold points of each other AND neither's mean response length
// exceeds length_ratio_max times the other's. Both bounds are inclusive.
// Symmetric in its arguments. Throws MissingScore when either profile lacks
// a score for `task`.
CompatibilityReport compatible_pair(const ModelProfile& a,
                                    const ModelProfile& b,
                                    const std::string& task,
                                    double gap_threshold = 10.0,
                                    double length_ratio_max = 2.0);

enum class CompatibilityMode {
  all_pairs,     // a candidate must be compatible with every selected member
  primary_only,  // a candidate is only checked against the first pick
};

// Greedy pool selection: start from the best-scoring model (the primary),
// then repeatedly add the best-scoring remaining model that passes the
// compatibility gate, until max_n members are selected or no candidate
// qualifies. Score ties break by ascending model_id byte order, making the
// result deterministic.
std::vector<ModelProfile> select_ensemble(
    const std::vector<ModelProfile>& pool, const std::string& task, int max_n,
    double gap_threshold = 10.0, double length_ratio_max = 2.0,
    CompatibilityMode mode = CompatibilityMode::all_pairs);

}  // namespace unite
