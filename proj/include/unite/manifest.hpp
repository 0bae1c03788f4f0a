#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unite/http_backend.hpp"
#include "unite/orchestrator.hpp"

namespace unite {

// One model as declared in a manifest file. Exactly one of backend_url /
// script_file is set; file paths are already resolved against the manifest's
// own directory.
struct ManifestEntry {
  std::string model_id;
  std::map<std::string, double> scores;  // task -> accuracy percentage
  double mean_response_length = 0.0;
  std::filesystem::path vocab_file;
  std::optional<std::string> backend_url;
  std::optional<std::filesystem::path> script_file;
  std::optional<std::string> eos_token;
  std::optional<int> timeout_ms;  // HTTP backends only
};

// Manifest file: a JSON array of
//   {model_id, scores: {task: acc}, mean_response_length, vocab_file,
//    backend_url | script_file, eos_token?, timeout_ms?}
// Validates field shapes (scores in [0,100], positive length, exactly one
// backend source, unique model_ids); throws ParseError on any violation.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

// Loads vocabularies and constructs tokenizer handles and backends for the
// given entries. Scripted members are checked for model_id agreement with
// their script file; HTTP members make no network traffic until stepped.
std::vector<EnsembleMember> build_members(
    const std::vector<ManifestEntry>& entries);

}  // namespace unite
