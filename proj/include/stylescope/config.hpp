#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylescope/intervene.hpp"
#include "stylescope/stats.hpp"

namespace stylescope {

struct LensSettings {
  std::vector<std::string> prompts;  // empty: the generation prompts
  int position = -1;                 // negative counts from the end
  std::string target = " of";        // must encode to exactly one token
};

struct ExperimentConfig {
  std::filesystem::path checkpoint;
  std::optional<int> n_heads;  // safetensors only; d_model / 64 otherwise
  std::filesystem::path vocab;
  std::filesystem::path merges;
  std::filesystem::path original_corpus;
  std::filesystem::path comparison_corpus;
  std::filesystem::path output_dir;

  std::size_t chunk_size = 512;
  std::size_t overlap = 128;
  std::vector<int> layers = default_extraction_layers();
  double frequency_threshold = 0.1;

  StatsOptions stats;
  std::string rank_by = "abs_cohens_d";
  std::size_t top_k = 500;
  double d_cutoff = 1.0;

  std::size_t context_neurons = 20;
  std::size_t contexts_top_n = 10;
  std::size_t context_window = 20;

  LensSettings lens;

  GenerationConfig generation;
  std::vector<std::string> prompts;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  SteeringGrid steering;
  std::vector<AblationPlan> ablation_plans;

  ExperimentConfig();

  // Throws ConfigError (or InvalidOverlap) on the first problem found;
  // checks that every referenced input file exists.
  void validate() const;
  nlohmann::json to_json() const;
};

// The three prompts taken from the literary text.
const std::vector<std::string>& default_prompts();

// Parses TOML (or JSON, chosen by extension or leading '{'), applies
// "dotted.key=value" overrides (value parsed as JSON, else taken as a
// string) and resolves relative paths against the config file's directory.
// A relative checkpoint path resolves against $STYLESCOPE_CHECKPOINT_DIR
// when that variable is set.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

// Same, from an already-parsed document.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

// TOML text to JSON (tables, arrays, scalars).
nlohmann::json toml_to_json(const std::string& text, const std::string& source_name = "config");

void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace stylescope
