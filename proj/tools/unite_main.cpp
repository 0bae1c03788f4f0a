// unite — probability-level ensembling of multiple language models.
//
// Subcommands:
//   select    run the compatibility gate over a model manifest
//   generate  decode one prompt with the configured ensemble method
//   sweep-k   run the same decode at several k values and report efficiency
//
// Exit codes: 0 success, 2 configuration/manifest error, 3 runtime/backend
// error. Machine-readable JSON goes to stdout or --out; human-readable
// tables go to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "unite/baseline.hpp"
#include "unite/manifest.hpp"
#include "unite/orchestrator.hpp"
#include "unite/selection.hpp"
#include "unite/tokenization.hpp"
#include "unite/trace.hpp"
#include "unite/types.hpp"
#include "unite/util.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::string manifest_path;
  std::string task;
  std::string method = "unite";
  std::string out_path;
  std::string prompt;
  std::string prompt_file;
  std::string primary;
  std::string mode = "all_pairs";
  int k = 10;
  int max_models = 4;
  int max_new_tokens = 64;
  int max_n = 4;
  int sample_k = 0;  // 0 = greedy; >0 switches to top-k sampling
  std::uint64_t seed = 0;
  double floor_value = 0.0;
  double gap_threshold = 10.0;
  double length_ratio_max = 2.0;
  std::vector<std::string> stop_tokens;
  std::vector<int> k_values;
  bool timings = false;
};

// ---------------------------------------------------------------------------
// Config file: flat `key = value` lines plus one `[ensemble]` section.
// Values for stop_tokens are a JSON array of strings. Lines starting with
// `#` and blank lines are ignored. CLI flags and UNITE_* environment
// variables take precedence over config file entries.
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;  // "section.key" -> raw value

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) {
    return "";
  }
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw unite::ConfigError("config", "cannot open config file " + path);
  }
  ConfigMap values;
  std::string section;  // "" = top level
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') {
      continue;
    }
    if (text.front() == '[' && text.back() == ']') {
      section = trim(text.substr(1, text.size() - 2));
      if (section != "ensemble") {
        throw unite::ParseError(line_no, "unknown config section [" + section +
                                             "] in " + path);
      }
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw unite::ParseError(line_no, "expected key = value in " + path);
    }
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) {
      throw unite::ParseError(line_no, "empty key in " + path);
    }
    values[section.empty() ? key : section + "." + key] = value;
  }
  return values;
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int parsed = std::stoi(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument(value);
    }
    return parsed;
  } catch (const std::exception&) {
    throw unite::ConfigError(key, "not an integer: " + value);
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument(value);
    }
    return parsed;
  } catch (const std::exception&) {
    throw unite::ConfigError(key, "not a number: " + value);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t parsed = std::stoull(value, &used);
    if (used != value.size()) {
      throw std::invalid_argument(value);
    }
    return parsed;
  } catch (const std::exception&) {
    throw unite::ConfigError(key, "not an unsigned integer: " + value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no") {
    return false;
  }
  throw unite::ConfigError(key, "not a boolean: " + value);
}

std::vector<std::string> to_string_list(const std::string& key,
                                        const std::string& value) {
  nlohmann::json parsed =
      nlohmann::json::parse(value, /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_array()) {
    throw unite::ConfigError(key, "expected a JSON array of strings");
  }
  std::vector<std::string> out;
  for (const auto& item : parsed) {
    if (!item.is_string()) {
      throw unite::ConfigError(key, "expected a JSON array of strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

// Fills state fields from the config file for every option the command line
// and environment left untouched. Input paths named by the config file
// (manifest, prompt_file) resolve relative to the config file's directory.
void apply_config(const CLI::App& cmd, const ConfigMap& config,
                  const std::string& config_path, CliState& state) {
  const std::filesystem::path config_dir =
      std::filesystem::path(config_path).parent_path();
  auto near_config = [&](const std::string& value) {
    std::filesystem::path p(value);
    if (p.is_absolute() || config_dir.empty()) return value;
    return (config_dir / p).string();
  };
  auto unset = [&](const std::string& flag) {
    const CLI::Option* opt = cmd.get_option_no_throw(flag);
    return opt != nullptr && opt->count() == 0;
  };
  auto take = [&](const std::string& flag, const std::string& config_key,
                  auto&& assign) {
    const auto it = config.find(config_key);
    if (it != config.end() && unset(flag)) {
      assign(it->second);
    }
  };

  take("--manifest", "manifest",
       [&](const std::string& v) { state.manifest_path = near_config(v); });
  take("--task", "task", [&](const std::string& v) { state.task = v; });
  take("--method", "method", [&](const std::string& v) { state.method = v; });
  take("--out", "out", [&](const std::string& v) { state.out_path = v; });
  take("--prompt", "prompt", [&](const std::string& v) { state.prompt = v; });
  take("--prompt-file", "prompt_file",
       [&](const std::string& v) { state.prompt_file = near_config(v); });
  take("--timings", "timings",
       [&](const std::string& v) { state.timings = to_bool("timings", v); });
  take("--k", "ensemble.k",
       [&](const std::string& v) { state.k = to_int("ensemble.k", v); });
  take("--max-models", "ensemble.max_models", [&](const std::string& v) {
    state.max_models = to_int("ensemble.max_models", v);
  });
  take("--max-new-tokens", "ensemble.max_new_tokens",
       [&](const std::string& v) {
         state.max_new_tokens = to_int("ensemble.max_new_tokens", v);
       });
  take("--primary", "ensemble.primary_model",
       [&](const std::string& v) { state.primary = v; });
  take("--sample-k", "ensemble.sample_k", [&](const std::string& v) {
    state.sample_k = to_int("ensemble.sample_k", v);
  });
  take("--seed", "ensemble.seed",
       [&](const std::string& v) { state.seed = to_u64("ensemble.seed", v); });
  take("--floor", "ensemble.missing_prob_floor", [&](const std::string& v) {
    state.floor_value = to_double("ensemble.missing_prob_floor", v);
  });
  take("--stop-token", "ensemble.stop_tokens", [&](const std::string& v) {
    state.stop_tokens = to_string_list("ensemble.stop_tokens", v);
  });
}

// ---------------------------------------------------------------------------
// Shared assembly helpers
// ---------------------------------------------------------------------------

unite::EnsembleConfig build_ensemble_config(const CliState& state) {
  unite::EnsembleConfig cfg;
  cfg.k = state.k;
  cfg.max_models = state.max_models;
  cfg.primary_model = state.primary;
  cfg.max_new_tokens = state.max_new_tokens;
  try {
    cfg.missing_prob_floor = unite::Probability(state.floor_value);
  } catch (const std::invalid_argument& e) {
    throw unite::ConfigError("missing_prob_floor", e.what());
  }
  if (state.sample_k > 0) {
    cfg.selection_policy = unite::TopKSample{state.sample_k, state.seed};
  }
  for (const std::string& token : state.stop_tokens) {
    if (token.empty()) {
      throw unite::ConfigError("stop_tokens", "stop token must be non-empty");
    }
    cfg.stop_tokens.insert(unite::TokenText(token));
  }
  return cfg;
}

// The best-scoring member on `task` (ties by ascending model_id), used when
// --primary is not given.
std::string default_primary(const std::vector<unite::EnsembleMember>& members,
                            const std::string& task) {
  if (task.empty()) {
    throw unite::ConfigError(
        "primary_model", "give --primary, or --task to pick the best scorer");
  }
  const unite::EnsembleMember* best = nullptr;
  double best_score = 0.0;
  for (const unite::EnsembleMember& member : members) {
    const auto it = member.profile.scores.find(task);
    if (it == member.profile.scores.end()) {
      throw unite::MissingScore(member.profile.model_id, task);
    }
    if (best == nullptr || it->second > best_score ||
        (it->second == best_score &&
         member.profile.model_id < best->profile.model_id)) {
      best = &member;
      best_score = it->second;
    }
  }
  return best->profile.model_id;
}

std::string read_prompt(const CliState& state) {
  const bool has_prompt = !state.prompt.empty();
  const bool has_file = !state.prompt_file.empty();
  if (has_prompt == has_file) {
    throw unite::ConfigError("prompt",
                             "exactly one of --prompt / --prompt-file required");
  }
  if (has_prompt) {
    return state.prompt;
  }
  std::ifstream in(state.prompt_file, std::ios::binary);
  if (!in) {
    throw unite::ConfigError("prompt_file",
                             "cannot open " + state.prompt_file);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();  // taken verbatim, including any trailing newline
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw unite::ConfigError("out", "cannot open " + path + " for writing");
  }
  out << content;
}

// JSON to --out when given, stdout otherwise.
void emit_json(const CliState& state, const nlohmann::json& doc) {
  const std::string body = doc.dump(2) + "\n";
  if (!state.out_path.empty()) {
    write_text_file(state.out_path, body);
  } else {
    std::cout << body;
  }
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

int run_select(const CliState& state) {
  const auto entries = unite::load_manifest(state.manifest_path);
  const auto members = unite::build_members(entries);
  if (state.task.empty()) {
    throw unite::ConfigError("task", "--task is required for select");
  }

  std::vector<unite::ModelProfile> pool;
  pool.reserve(members.size());
  for (const unite::EnsembleMember& member : members) {
    pool.push_back(member.profile);
  }

  const unite::CompatibilityMode mode =
      state.mode == "primary_only" ? unite::CompatibilityMode::primary_only
                                   : unite::CompatibilityMode::all_pairs;
  if (state.mode != "primary_only" && state.mode != "all_pairs") {
    throw unite::ConfigError("mode", "must be all_pairs or primary_only");
  }

  const std::vector<unite::ModelProfile> selected = unite::select_ensemble(
      pool, state.task, state.max_n, state.gap_threshold,
      state.length_ratio_max, mode);

  nlohmann::json reports = nlohmann::json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const unite::CompatibilityReport r = unite::compatible_pair(
          pool[i], pool[j], state.task, state.gap_threshold,
          state.length_ratio_max);
      nlohmann::json failed = nlohmann::json::array();
      for (const unite::CompatCheck check : r.failed_checks) {
        failed.push_back(unite::check_name(check));
      }
      reports.push_back({{"a", pool[i].model_id},
                         {"b", pool[j].model_id},
                         {"compatible", r.compatible},
                         {"perf_gap", r.perf_gap},
                         {"length_ratio", r.length_ratio},
                         {"failed_checks", std::move(failed)}});
    }
  }
  nlohmann::json selected_ids = nlohmann::json::array();
  for (const unite::ModelProfile& profile : selected) {
    selected_ids.push_back(profile.model_id);
  }
  emit_json(state, {{"task", state.task},
                    {"selected", std::move(selected_ids)},
                    {"reports", std::move(reports)}});

  std::cerr << "selected (" << selected.size() << "):";
  for (const unite::ModelProfile& profile : selected) {
    std::cerr << " " << profile.model_id;
  }
  std::cerr << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct ResolvedRun {
  std::vector<unite::EnsembleMember> members;
  unite::EnsembleConfig cfg;
  bool zero_fill = false;
};

ResolvedRun resolve_run(const CliState& state) {
  ResolvedRun run;
  auto members = unite::build_members(unite::load_manifest(state.manifest_path));

  std::string method = state.method;
  if (method.rfind("single:", 0) == 0) {
    const std::string id = method.substr(std::string("single:").size());
    if (id.empty()) {
      throw unite::ConfigError("method", "single: needs a model id");
    }
    auto it = std::find_if(members.begin(), members.end(),
                           [&](const unite::EnsembleMember& m) {
                             return m.profile.model_id == id;
                           });
    if (it == members.end()) {
      throw unite::ConfigError("method",
                               "model " + id + " is not in the manifest");
    }
    run.members.push_back(std::move(*it));
  } else if (method == "unite" || method == "zero_fill") {
    run.members = std::move(members);
    run.zero_fill = (method == "zero_fill");
  } else {
    throw unite::ConfigError(
        "method", "must be unite, zero_fill, or single:<model_id>");
  }

  CliState effective = state;
  if (effective.primary.empty()) {
    effective.primary = run.members.size() == 1
                            ? run.members.front().profile.model_id
                            : default_primary(run.members, state.task);
  }
  run.cfg = build_ensemble_config(effective);
  return run;
}

int run_generate(const CliState& state) {
  const ResolvedRun run = resolve_run(state);
  const std::string prompt = read_prompt(state);
  const std::string trace_path =
      state.out_path.empty() ? std::string("trace.json") : state.out_path;

  unite::DecodeTrace trace;
  try {
    trace = run.zero_fill
                ? unite::zero_fill_generate(prompt, run.members, run.cfg)
                : unite::generate(prompt, run.members, run.cfg);
  } catch (const unite::GenerationAborted& e) {
    write_text_file(trace_path,
                    unite::trace_to_json(e.partial_trace(), state.timings)
                            .dump(2) +
                        "\n");
    std::cerr << "error: " << e.what() << " (partial trace written to "
              << trace_path << ")\n";
    return 3;
  }

  write_text_file(trace_path,
                  unite::trace_to_json(trace, state.timings).dump(2) + "\n");
  std::cout << trace.output_text << "\n";

  const unite::EfficiencyReport rep = unite::report(
      {trace}, run.zero_fill ? unite::Method::zero_fill_full_union
                             : unite::Method::unite);
  std::cerr << unite::report_to_table(rep);
  std::cerr << "stop_reason: " << unite::to_string(trace.stop_reason)
            << "; trace written to " << trace_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-k
// ---------------------------------------------------------------------------

int run_sweep_k(const CliState& state) {
  if (state.k_values.empty()) {
    throw unite::ConfigError("k_values", "--k-values is required");
  }
  std::vector<int> ks;
  for (const int k : state.k_values) {
    if (k < 1) {
      throw unite::ConfigError("k_values", "k must be >= 1, got " +
                                               std::to_string(k));
    }
    if (std::find(ks.begin(), ks.end(), k) != ks.end()) {
      std::cerr << "warning: duplicate k=" << k << " ignored\n";
      continue;
    }
    ks.push_back(k);
  }

  const std::string prompt = read_prompt(state);
  nlohmann::json rows = nlohmann::json::array();
  std::cerr << "   k  mean_union  mean_cells  output_sha256\n";
  for (const int k : ks) {
    CliState per_k = state;
    per_k.k = k;
    const ResolvedRun run = resolve_run(per_k);
    const unite::DecodeTrace trace =
        run.zero_fill ? unite::zero_fill_generate(prompt, run.members, run.cfg)
                      : unite::generate(prompt, run.members, run.cfg);
    const unite::EfficiencyReport rep = unite::report(
        {trace}, run.zero_fill ? unite::Method::zero_fill_full_union
                               : unite::Method::unite);
    const std::string output_hash = unite::sha256_hex(trace.output_text);

    nlohmann::json row = unite::report_to_json(rep);
    row["output_sha256"] = output_hash;
    rows.push_back(std::move(row));

    std::cerr << std::setw(4) << k << "  " << std::setw(10)
              << rep.mean_union_size << "  " << std::setw(10)
              << rep.mean_tokens_manipulated << "  "
              << output_hash.substr(0, 16) << "...\n";
  }
  emit_json(state, rows);
  return 0;
}

void add_common_options(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_path,
                  "Config file (flat key=value with an [ensemble] section)")
      ->envname("UNITE_CONFIG");
  cmd->add_option("--manifest", state.manifest_path, "Model manifest (JSON)")
      ->envname("UNITE_MANIFEST");
  cmd->add_option("--task", state.task, "Task name for scores")
      ->envname("UNITE_TASK");
  cmd->add_option("--out", state.out_path, "Output file for machine output")
      ->envname("UNITE_OUT");
}

void add_run_options(CLI::App* cmd, CliState& state) {
  cmd->add_option("--prompt", state.prompt, "Prompt text")
      ->envname("UNITE_PROMPT");
  cmd->add_option("--prompt-file", state.prompt_file,
                  "File containing the prompt, read verbatim")
      ->envname("UNITE_PROMPT_FILE");
  cmd->add_option("--method", state.method,
                  "unite | zero_fill | single:<model_id>")
      ->envname("UNITE_METHOD");
  cmd->add_option("--primary", state.primary,
                  "Primary model id (default: best scorer on --task)")
      ->envname("UNITE_PRIMARY");
  cmd->add_option("--k", state.k, "Top-k per model")->envname("UNITE_K");
  cmd->add_option("--max-models", state.max_models, "Member limit")
      ->envname("UNITE_MAX_MODELS");
  cmd->add_option("--max-new-tokens", state.max_new_tokens,
                  "Decode step budget")
      ->envname("UNITE_MAX_NEW_TOKENS");
  cmd->add_option("--sample-k", state.sample_k,
                  "Enable top-k sampling over the best sample_k tokens")
      ->envname("UNITE_SAMPLE_K");
  cmd->add_option("--seed", state.seed, "Sampling seed")->envname("UNITE_SEED");
  cmd->add_option("--floor", state.floor_value,
                  "Probability floor for unpriceable tokens")
      ->envname("UNITE_FLOOR");
  cmd->add_option("--stop-token", state.stop_tokens,
                  "Stop token (repeatable)")
      ->envname("UNITE_STOP_TOKEN");
  cmd->add_flag("--timings", state.timings,
                "Include wall_time_ns in trace JSON (volatile across runs)")
      ->envname("UNITE_TIMINGS");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probability-level ensembling of multiple language models"};
  app.require_subcommand(1);
  CliState state;

  CLI::App* select = app.add_subcommand(
      "select", "Pick a mutually compatible ensemble from a manifest");
  add_common_options(select, state);
  select->add_option("--max-n", state.max_n, "Maximum ensemble size")
      ->envname("UNITE_MAX_N");
  select->add_option("--gap-threshold", state.gap_threshold,
                     "Max accuracy gap in points (inclusive)")
      ->envname("UNITE_GAP_THRESHOLD");
  select->add_option("--length-ratio-max", state.length_ratio_max,
                     "Max response length ratio (inclusive)")
      ->envname("UNITE_LENGTH_RATIO_MAX");
  select->add_option("--mode", state.mode, "all_pairs | primary_only")
      ->envname("UNITE_MODE");

  CLI::App* generate =
      app.add_subcommand("generate", "Decode one prompt with the ensemble");
  add_common_options(generate, state);
  add_run_options(generate, state);

  CLI::App* sweep =
      app.add_subcommand("sweep-k", "Decode at several k and compare cost");
  add_common_options(sweep, state);
  add_run_options(sweep, state);
  sweep->add_option("--k-values", state.k_values,
                    "k values to sweep, e.g. --k-values 5 10 15 20")
      ->envname("UNITE_K_VALUES")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!state.config_path.empty()) {
      apply_config(*cmd, read_config_file(state.config_path),
                   state.config_path, state);
    }
    if (state.manifest_path.empty()) {
      throw unite::ConfigError("manifest", "--manifest is required");
    }
    if (cmd == select) {
      return run_select(state);
    }
    if (cmd == generate) {
      return run_generate(state);
    }
    return run_sweep_k(state);
  } catch (const unite::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const unite::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const unite::DuplicateTokenError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const unite::MissingScore& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const unite::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
