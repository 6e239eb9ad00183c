#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylescope/activations.hpp"
#include "stylescope/hooks.hpp"
#include "stylescope/model.hpp"
#include "stylescope/stats.hpp"
#include "stylescope/styleval.hpp"
#include "stylescope/tokenizer.hpp"

namespace stylescope {

struct GenerationConfig {
  int max_new_tokens = 250;
  double nucleus_p = 0.95;
  double temperature = 0.85;
  std::uint64_t seed = 0;
  bool greedy = false;            // argmax decoding, no random draws
  bool intervene_prompt = true;   // false: interventions skip prompt positions
  bool stop_at_eos = false;

  // Throws InvalidIntervention.
  void validate() const;
};

struct GenerationResult {
  TokenSequence prompt;
  TokenSequence generated;
};

// Called after every forward step with that step's trace (rows cover the
// positions fed at that step). Captures listed here are added to the
// forward options.
struct StepObserver {
  std::vector<HookPoint> capture;
  std::function<void(int step, const ForwardTrace& trace)> on_step;
};

// KV-cached autoregressive decoding. Each step: logits / T, softmax, sort,
// nucleus, renormalize, one draw from an mt19937_64 seeded with cfg.seed.
// Throws ContextOverflow when prompt + max_new_tokens exceeds n_ctx.
GenerationResult generate(const ModelBundle& bundle, const TokenSequence& prompt, const GenerationConfig& cfg,
                          const std::vector<InterventionSpec>& interventions = {},
                          const StepObserver* observer = nullptr);

// column-mean(orig) - column-mean(comparison). Throws ShapeMismatch.
std::vector<float> style_vector(const ActivationMatrix& orig, const ActivationMatrix& comparison);

// One generated sample of a suite cell.
struct SampleResult {
  int prompt_index = 0;
  std::uint64_t seed = 0;
  std::string continuation;  // generated text only; the prompt is excluded from scoring
  double style_score = 0.0;
  std::string error;
};

struct ConditionResult {
  std::string name;
  std::string method;  // baseline, ablate, additive, multiplicative, clamp
  double parameter = 0.0;
  std::vector<int> layers;
  std::size_t neurons = 0;  // intervened neuron count (summed over layers)
  std::vector<SampleResult> samples;
  double mean_score = 0.0;
  double sd_score = 0.0;
  double degradation_pct = 0.0;
  std::string error;  // set when the condition failed; other conditions still run
};

struct SuiteSettings {
  GenerationConfig generation;
  std::vector<std::string> prompts;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  StyleReport reference;  // stylometrics of the original corpus, for the composite score
};

struct AblationPlan {
  enum class Kind { single_top, cumulative, multi_layer };
  Kind kind = Kind::cumulative;
  std::size_t single_count = 10;
  std::vector<std::size_t> counts = {1, 2, 5, 10, 20, 50};
  int cumulative_layer = 21;
  std::vector<std::vector<int>> layer_sets = {{21}, {20, 21}, {20, 21, 22}, {19, 20, 21, 22}};
  std::size_t per_layer_k = 20;
};

std::string to_string(AblationPlan::Kind kind);
AblationPlan::Kind parse_ablation_kind(const std::string& name);

struct SuiteResult {
  ConditionResult baseline;
  std::vector<ConditionResult> conditions;
};

// Baseline cell once per (prompt, seed), then one cell per condition with
// ablate_zero specs. `ranked` is in rank order (rank_neurons output). A
// baseline from an earlier suite with the same settings may be passed in.
SuiteResult run_ablation_suite(const ModelBundle& bundle, const Tokenizer& tokenizer,
                               const std::vector<NeuronScore>& ranked, const SuiteSettings& settings,
                               const AblationPlan& plan, const ConditionResult* baseline = nullptr);

// The unmodified generations every condition is compared against.
ConditionResult run_baseline(const ModelBundle& bundle, const Tokenizer& tokenizer, const SuiteSettings& settings);

struct SteeringGrid {
  std::vector<double> alphas = {0.5, 1.0, 1.5, 2.0};
  std::vector<double> betas = {1.5, 2.0, 2.5};
  std::vector<double> gammas = {0.3, 0.5, 1.0};
  std::size_t top_k = 20;       // per layer, literary-preferring (d > 0)
  std::vector<int> layers;      // empty: every layer with a style vector
};

// Additive steering with the per-layer style vectors, multiplicative and
// clamp steering on each layer's top-k positive-d neurons.
SuiteResult run_steering_suite(const ModelBundle& bundle, const Tokenizer& tokenizer,
                               const std::vector<NeuronScore>& ranked,
                               const std::map<int, std::vector<float>>& style_vectors, const SuiteSettings& settings,
                               const SteeringGrid& grid);

// Top-k neurons of `layer` from a ranked list; positive_only keeps d > 0.
std::vector<int> top_neurons_in_layer(const std::vector<NeuronScore>& ranked, int layer, std::size_t k,
                                      bool positive_only = false);

nlohmann::json to_json(const ConditionResult& c, bool include_texts = true);
nlohmann::json to_json(const SuiteResult& r, bool include_texts = true);
void write_suite_csv(std::ostream& out, const SuiteResult& r);

// Baseline texts vs every condition's texts, paired by (prompt, seed).
ComparisonTable suite_comparison(const SuiteResult& r, const StyleReport& reference);

}  // namespace stylescope
