#include "unite/manifest.hpp"

#include <json.hpp>

#include <fstream>
#include <unordered_set>

#include "unite/tokenization.hpp"

namespace unite {

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open manifest " + path.string());
  }
  nlohmann::json doc =
      nlohmann::json::parse(in, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_array() || doc.empty()) {
    throw ParseError("manifest " + path.string() +
                     " must be a non-empty JSON array of model entries");
  }

  const std::filesystem::path base_dir = path.parent_path();
  auto resolve = [&](const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base_dir / p;
  };

  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> ids;
  for (const auto& item : doc) {
    if (!item.is_object()) {
      throw ParseError("manifest entry must be an object");
    }
    ManifestEntry entry;
    entry.model_id = item.value("model_id", std::string{});
    if (entry.model_id.empty()) {
      throw ParseError("manifest entry is missing model_id");
    }
    const std::string where = " (model " + entry.model_id + ")";
    if (!ids.insert(entry.model_id).second) {
      throw ParseError("duplicate model_id in manifest" + where);
    }

    if (!item.contains("scores") || !item["scores"].is_object()) {
      throw ParseError("scores must be an object of task -> accuracy" + where);
    }
    for (const auto& [task, score] : item["scores"].items()) {
      if (task.empty() || !score.is_number()) {
        throw ParseError("bad score entry" + where);
      }
      const double value = score.get<double>();
      if (!(value >= 0.0 && value <= 100.0)) {
        throw ParseError("score for task \"" + task +
                         "\" must be in [0,100]" + where);
      }
      entry.scores.emplace(task, value);
    }

    if (!item.contains("mean_response_length") ||
        !item["mean_response_length"].is_number()) {
      throw ParseError("mean_response_length must be a number" + where);
    }
    entry.mean_response_length = item["mean_response_length"].get<double>();
    if (!(entry.mean_response_length > 0.0)) {
      throw ParseError("mean_response_length must be positive" + where);
    }

    if (!item.contains("vocab_file") || !item["vocab_file"].is_string()) {
      throw ParseError("vocab_file must be a string path" + where);
    }
    entry.vocab_file = resolve(item["vocab_file"].get<std::string>());

    const bool has_url =
        item.contains("backend_url") && item["backend_url"].is_string();
    const bool has_script =
        item.contains("script_file") && item["script_file"].is_string();
    if (has_url == has_script) {
      throw ParseError(
          "exactly one of backend_url / script_file must be set" + where);
    }
    if (has_url) {
      entry.backend_url = item["backend_url"].get<std::string>();
    } else {
      entry.script_file = resolve(item["script_file"].get<std::string>());
    }

    if (item.contains("eos_token")) {
      if (!item["eos_token"].is_string() ||
          item["eos_token"].get<std::string>().empty()) {
        throw ParseError("eos_token must be a non-empty string" + where);
      }
      entry.eos_token = item["eos_token"].get<std::string>();
    }
    if (item.contains("timeout_ms")) {
      if (!item["timeout_ms"].is_number_integer() ||
          item["timeout_ms"].get<int>() < 1) {
        throw ParseError("timeout_ms must be a positive integer" + where);
      }
      entry.timeout_ms = item["timeout_ms"].get<int>();
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<EnsembleMember> build_members(
    const std::vector<ManifestEntry>& entries) {
  std::vector<EnsembleMember> members;
  members.reserve(entries.size());
  for (const ManifestEntry& entry : entries) {
    auto vocab = std::make_shared<const Vocab>(load_vocab(entry.vocab_file));
    auto tokenizer = std::make_shared<const Tokenizer>(vocab);

    ModelProfile profile;
    profile.model_id = entry.model_id;
    profile.vocab = vocab;
    profile.tokenizer = tokenizer;
    profile.scores = entry.scores;
    profile.mean_response_length = entry.mean_response_length;
    if (entry.eos_token) {
      if (!vocab->contains(std::string_view(*entry.eos_token))) {
        throw ParseError("eos_token " + nlohmann::json(*entry.eos_token).dump() +
                         " is not in the vocabulary of " + entry.model_id);
      }
      profile.eos_token = TokenText(*entry.eos_token);
    }

    std::shared_ptr<Backend> backend;
    if (entry.script_file) {
      auto scripted = load_scripted_backend(*entry.script_file, vocab);
      if (scripted->model_id() != entry.model_id) {
        throw ParseError("script file for " + entry.model_id +
                         " declares model_id " + scripted->model_id());
      }
      backend = std::move(scripted);
    } else {
      HttpBackendOptions options;
      if (entry.timeout_ms) {
        options.timeout_ms = *entry.timeout_ms;
      }
      backend = std::make_shared<HttpBackend>(entry.model_id, *entry.backend_url,
                                              vocab, options);
    }
    members.push_back(EnsembleMember{std::move(profile), std::move(backend)});
  }
  return members;
}

}  // namespace unite
