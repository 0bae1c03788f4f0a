#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "unite/types.hpp"

namespace unite {

enum class StopReason {
  eos,         // the primary member's end-of-sequence token was chosen
  max_tokens,  // max_new_tokens steps were taken
  stop_token,  // a configured stop token was chosen
  aborted,     // backend failure after retries; the trace is partial
};

std::string to_string(StopReason reason);

// Accounting for one decode step.
struct StepRecord {
  int union_size = 0;
  // Token-probability cells processed this step: n models × union_size.
  int tokens_manipulated = 0;
  TokenText chosen;
  // Criterion name -> number of matrix cells it produced.
  std::map<std::string, int> provenance_counts;
  std::int64_t wall_time_ns = 0;
};

// Full record of one decode run. output_text is the concatenation of chosen
// tokens, excluding a terminal eos/stop token (the terminator still appears
// as the last step's chosen token).
struct DecodeTrace {
  std::vector<StepRecord> steps;
  std::string output_text;
  StopReason stop_reason = StopReason::max_tokens;

  // Run metadata, carried for reporting.
  std::string prompt;
  int n_models = 0;
  int k = 0;
};

// Serializes a trace to the fixed JSON schema. Step timings are volatile
// across runs, so they are omitted unless requested; everything else is
// byte-deterministic for scripted/replay backends.
nlohmann::json trace_to_json(const DecodeTrace& trace,
                             bool include_timings = false);

}  // namespace unite
