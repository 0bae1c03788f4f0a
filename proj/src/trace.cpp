#include "unite/trace.hpp"

namespace unite {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::eos:
      return "eos";
    case StopReason::max_tokens:
      return "max_tokens";
    case StopReason::stop_token:
      return "stop_token";
    case StopReason::aborted:
      return "aborted";
  }
  return "unknown";
}

nlohmann::json trace_to_json(const DecodeTrace& trace, bool include_timings) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepRecord& step : trace.steps) {
    nlohmann::json j = {{"union_size", step.union_size},
                        {"tokens_manipulated", step.tokens_manipulated},
                        {"chosen", step.chosen.str()},
                        {"provenance_counts", step.provenance_counts}};
    if (include_timings) {
      j["wall_time_ns"] = step.wall_time_ns;
    }
    steps.push_back(std::move(j));
  }
  return {{"prompt", trace.prompt},
          {"n_models", trace.n_models},
          {"k", trace.k},
          {"steps", std::move(steps)},
          {"output_text", trace.output_text},
          {"stop_reason", to_string(trace.stop_reason)}};
}

}  // namespace unite
