#include "unite/types.hpp"

#include <algorithm>

namespace unite {

void validate_config(const EnsembleConfig& cfg,
                     const std::vector<ModelProfile>& members) {
  if (cfg.k < 1) {
    throw ConfigError("k", "must be >= 1, got " + std::to_string(cfg.k));
  }
  if (cfg.max_models < 1) {
    throw ConfigError("max_models",
                      "must be >= 1, got " + std::to_string(cfg.max_models));
  }
  if (cfg.max_new_tokens < 1) {
    throw ConfigError("max_new_tokens", "must be >= 1, got " +
                                            std::to_string(cfg.max_new_tokens));
  }
  if (const auto* sample = std::get_if<TopKSample>(&cfg.selection_policy)) {
    if (sample->sample_k < 1) {
      throw ConfigError("selection_policy.sample_k",
                        "must be >= 1, got " + std::to_string(sample->sample_k));
    }
  }
  if (members.empty()) {
    throw ConfigError("members", "ensemble must have at least one member");
  }
  if (members.size() > static_cast<std::size_t>(cfg.max_models)) {
    throw ConfigError("max_models",
                      std::to_string(members.size()) +
                          " members exceed max_models = " +
                          std::to_string(cfg.max_models));
  }
  const bool primary_present =
      std::any_of(members.begin(), members.end(), [&](const ModelProfile& m) {
        return m.model_id == cfg.primary_model;
      });
  if (!primary_present) {
    throw ConfigError("primary_model", "\"" + cfg.primary_model +
                                           "\" is not an ensemble member");
  }
}

}  // namespace unite
