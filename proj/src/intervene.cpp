#include "stylescope/intervene.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "stylescope/error.hpp"
#include "stylescope/sampling.hpp"

namespace stylescope {

void GenerationConfig::validate() const {
  if (max_new_tokens < 0) throw InvalidIntervention("max_new_tokens must be non-negative");
  if (!(nucleus_p > 0.0 && nucleus_p <= 1.0)) throw InvalidIntervention("nucleus_p must lie in (0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidIntervention("temperature must be positive");
}

GenerationResult generate(const ModelBundle& bundle, const TokenSequence& prompt, const GenerationConfig& cfg,
                          const std::vector<InterventionSpec>& interventions, const StepObserver* observer) {
  cfg.validate();
  if (prompt.empty()) throw EmptyText("generation needs a non-empty prompt");
  for (TokenId id : prompt) {
    if (id < 0 || id >= bundle.config.vocab_size) throw UnknownTokenId("prompt token " + std::to_string(id));
  }
  const std::size_t total = prompt.size() + static_cast<std::size_t>(cfg.max_new_tokens);
  if (total > static_cast<std::size_t>(bundle.config.n_ctx)) {
    throw ContextOverflow("prompt (" + std::to_string(prompt.size()) + ") + max_new_tokens (" +
                          std::to_string(cfg.max_new_tokens) + ") exceeds n_ctx " +
                          std::to_string(bundle.config.n_ctx));
  }

  ForwardOptions options;
  options.interventions = interventions;
  options.intervene_from_position = cfg.intervene_prompt ? 0 : static_cast<int>(prompt.size());
  if (observer) options.capture = observer->capture;

  GenerationResult result;
  result.prompt = prompt;
  KvCache cache(bundle.config);
  Rng rng(cfg.seed);
  TokenSequence feed = prompt;
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    const ForwardTrace trace = forward_incremental(bundle, cache, feed, options);
    if (observer && observer->on_step) observer->on_step(step, trace);
    const auto last = trace.logits.row(trace.logits.rows - 1);
    const TokenId next = cfg.greedy ? argmax(last) : sample_token(last, cfg.temperature, cfg.nucleus_p, rng);
    result.generated.push_back(next);
    if (cfg.stop_at_eos && next == kEndOfText) break;
    feed.assign(1, next);
  }
  return result;
}

std::vector<float> style_vector(const ActivationMatrix& orig, const ActivationMatrix& comparison) {
  if (orig.layer != comparison.layer) throw ShapeMismatch("style vector from matrices of different layers");
  if (orig.values.cols != comparison.values.cols) throw ShapeMismatch("style vector: neuron counts differ");
  if (orig.values.rows == 0 || comparison.values.rows == 0) throw EmptySample("style vector from an empty matrix");
  std::vector<float> v(orig.values.cols);
  for (std::size_t c = 0; c < v.size(); ++c) {
    v[c] = static_cast<float>(mean(orig.values.column(c)) - mean(comparison.values.column(c)));
  }
  return v;
}

std::string to_string(AblationPlan::Kind kind) {
  switch (kind) {
    case AblationPlan::Kind::single_top: return "single_top";
    case AblationPlan::Kind::cumulative: return "cumulative";
    case AblationPlan::Kind::multi_layer: return "multi_layer";
  }
  return "?";
}

AblationPlan::Kind parse_ablation_kind(const std::string& name) {
  if (name == "single_top" || name == "single_top10" || name == "single") return AblationPlan::Kind::single_top;
  if (name == "cumulative") return AblationPlan::Kind::cumulative;
  if (name == "multi_layer") return AblationPlan::Kind::multi_layer;
  throw ConfigError("unknown ablation plan '" + name + "'");
}

std::vector<int> top_neurons_in_layer(const std::vector<NeuronScore>& ranked, int layer, std::size_t k,
                                      bool positive_only) {
  std::vector<int> out;
  for (const auto& s : ranked) {
    if (out.size() >= k) break;
    if (s.layer != layer) continue;
    if (positive_only && !(s.cohens_d > 0)) continue;
    out.push_back(s.neuron);
  }
  return out;
}

namespace {

void summarize(ConditionResult& c) {
  std::vector<double> scores;
  for (const auto& s : c.samples) {
    if (s.error.empty()) scores.push_back(s.style_score);
  }
  if (scores.empty()) {
    if (c.error.empty()) c.error = "every sample failed";
    return;
  }
  c.mean_score = mean(scores);
  c.sd_score = scores.size() >= 2 ? std::sqrt(sample_variance(scores)) : 0.0;
}

ConditionResult run_cell(const ModelBundle& bundle, const Tokenizer& tokenizer, const SuiteSettings& settings,
                         const std::vector<InterventionSpec>& specs, ConditionResult cell) {
  for (std::size_t p = 0; p < settings.prompts.size(); ++p) {
    const TokenSequence prompt = tokenizer.encode(settings.prompts[p]);
    for (std::uint64_t seed : settings.seeds) {
      SampleResult s;
      s.prompt_index = static_cast<int>(p);
      s.seed = seed;
      try {
        GenerationConfig cfg = settings.generation;
        cfg.seed = seed;
        const auto out = generate(bundle, prompt, cfg, specs);
        s.continuation = to_valid_utf8(tokenizer.decode(out.generated));
        s.style_score = composite_style_score(stylometrics(s.continuation), settings.reference);
      } catch (const Error& e) {
        s.error = e.what();
      }
      cell.samples.push_back(std::move(s));
    }
  }
  summarize(cell);
  return cell;
}

// Runs one condition against the shared baseline. No interventions means
// the baseline cell itself, so the degradation is exactly 0.
ConditionResult run_condition(const ModelBundle& bundle, const Tokenizer& tokenizer, const SuiteSettings& settings,
                              const ConditionResult& baseline, const std::vector<InterventionSpec>& specs,
                              ConditionResult cell) {
  try {
    if (specs.empty()) {
      cell.samples = baseline.samples;
      cell.mean_score = baseline.mean_score;
      cell.sd_score = baseline.sd_score;
      cell.error = baseline.error;
    } else {
      for (const auto& spec : specs) {
        if (spec.point.layer < 0 || spec.point.layer >= bundle.config.n_layers) {
          throw InvalidHookPoint("layer " + std::to_string(spec.point.layer) + " outside model");
        }
        spec.validate(static_cast<std::size_t>(bundle.config.d_mlp));
      }
      cell = run_cell(bundle, tokenizer, settings, specs, std::move(cell));
    }
    if (cell.error.empty()) {
      if (!baseline.error.empty()) throw StageError("baseline failed: " + baseline.error);
      cell.degradation_pct = degradation(baseline.mean_score, cell.mean_score);
    }
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

void check_settings(const SuiteSettings& settings) {
  if (settings.prompts.empty()) throw ConfigError("suite needs at least one prompt");
  if (settings.seeds.empty()) throw ConfigError("suite needs at least one seed");
  settings.generation.validate();
}

ConditionResult make_cell(std::string name, std::string method, double parameter, std::vector<int> layers,
                          std::size_t neurons) {
  ConditionResult c;
  c.name = std::move(name);
  c.method = std::move(method);
  c.parameter = parameter;
  c.layers = std::move(layers);
  c.neurons = neurons;
  return c;
}

std::string layer_range_name(const std::vector<int>& layers) {
  if (layers.empty()) return "none";
  std::vector<int> sorted = layers;
  std::sort(sorted.begin(), sorted.end());
  bool contiguous = true;
  for (std::size_t i = 1; i < sorted.size(); ++i) contiguous = contiguous && sorted[i] == sorted[i - 1] + 1;
  if (sorted.size() == 1) return "L" + std::to_string(sorted[0]);
  if (contiguous) return "L" + std::to_string(sorted.front()) + "-" + std::to_string(sorted.back());
  std::string s = "L";
  for (std::size_t i = 0; i < sorted.size(); ++i) s += (i ? "," : "") + std::to_string(sorted[i]);
  return s;
}

std::string param_name(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

ConditionResult run_baseline(const ModelBundle& bundle, const Tokenizer& tokenizer, const SuiteSettings& settings) {
  check_settings(settings);
  return run_cell(bundle, tokenizer, settings, {}, make_cell("baseline", "baseline", 0.0, {}, 0));
}

SuiteResult run_ablation_suite(const ModelBundle& bundle, const Tokenizer& tokenizer,
                               const std::vector<NeuronScore>& ranked, const SuiteSettings& settings,
                               const AblationPlan& plan, const ConditionResult* baseline) {
  check_settings(settings);
  SuiteResult result;
  result.baseline = baseline ? *baseline : run_baseline(bundle, tokenizer, settings);

  switch (plan.kind) {
    case AblationPlan::Kind::single_top: {
      const std::size_t n = std::min(plan.single_count, ranked.size());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = ranked[i];
        auto cell = make_cell("L" + std::to_string(s.layer) + "N" + std::to_string(s.neuron), "ablate", 1.0,
                              {s.layer}, 1);
        result.conditions.push_back(run_condition(bundle, tokenizer, settings, result.baseline,
                                                  {InterventionSpec::ablate(s.layer, {s.neuron})}, std::move(cell)));
      }
      break;
    }
    case AblationPlan::Kind::cumulative: {
      for (std::size_t count : plan.counts) {
        const auto neurons = top_neurons_in_layer(ranked, plan.cumulative_layer, count);
        std::vector<InterventionSpec> specs;
        if (!neurons.empty()) specs.push_back(InterventionSpec::ablate(plan.cumulative_layer, neurons));
        auto cell = make_cell("top" + std::to_string(count) + "@L" + std::to_string(plan.cumulative_layer), "ablate",
                              static_cast<double>(count), {plan.cumulative_layer}, neurons.size());
        result.conditions.push_back(
            run_condition(bundle, tokenizer, settings, result.baseline, specs, std::move(cell)));
      }
      break;
    }
    case AblationPlan::Kind::multi_layer: {
      for (const auto& layers : plan.layer_sets) {
        std::vector<InterventionSpec> specs;
        std::size_t total = 0;
        for (int l : layers) {
          const auto neurons = top_neurons_in_layer(ranked, l, plan.per_layer_k);
          if (neurons.empty()) continue;
          total += neurons.size();
          specs.push_back(InterventionSpec::ablate(l, neurons));
        }
        auto cell = make_cell(layer_range_name(layers), "ablate", static_cast<double>(plan.per_layer_k), layers, total);
        result.conditions.push_back(
            run_condition(bundle, tokenizer, settings, result.baseline, specs, std::move(cell)));
      }
      break;
    }
  }
  return result;
}

SuiteResult run_steering_suite(const ModelBundle& bundle, const Tokenizer& tokenizer,
                               const std::vector<NeuronScore>& ranked,
                               const std::map<int, std::vector<float>>& style_vectors, const SuiteSettings& settings,
                               const SteeringGrid& grid) {
  check_settings(settings);
  std::vector<int> layers = grid.layers;
  if (layers.empty()) {
    for (const auto& [l, v] : style_vectors) layers.push_back(l);
  }
  SuiteResult result;
  result.baseline = run_baseline(bundle, tokenizer, settings);

  for (double alpha : grid.alphas) {
    std::vector<InterventionSpec> specs;
    std::size_t total = 0;
    for (int l : layers) {
      const auto it = style_vectors.find(l);
      if (it == style_vectors.end()) continue;
      specs.push_back(InterventionSpec::add(l, it->second, static_cast<float>(alpha)));
      total += it->second.size();
    }
    auto cell = make_cell("additive_a" + param_name(alpha), "additive", alpha, layers, total);
    result.conditions.push_back(run_condition(bundle, tokenizer, settings, result.baseline, specs, std::move(cell)));
  }

  std::map<int, std::vector<int>> literary;
  for (int l : layers) literary[l] = top_neurons_in_layer(ranked, l, grid.top_k, true);
  auto set_specs = [&](bool scale, double coefficient, std::size_t& total) {
    std::vector<InterventionSpec> specs;
    for (const auto& [l, neurons] : literary) {
      if (neurons.empty()) continue;
      total += neurons.size();
      specs.push_back(scale ? InterventionSpec::scale(l, neurons, static_cast<float>(coefficient))
                            : InterventionSpec::clamp(l, neurons, static_cast<float>(coefficient)));
    }
    return specs;
  };
  for (double beta : grid.betas) {
    std::size_t total = 0;
    auto specs = set_specs(true, beta, total);
    auto cell = make_cell("multiplicative_b" + param_name(beta), "multiplicative", beta, layers, total);
    result.conditions.push_back(run_condition(bundle, tokenizer, settings, result.baseline, specs, std::move(cell)));
  }
  for (double gamma : grid.gammas) {
    std::size_t total = 0;
    auto specs = set_specs(false, gamma, total);
    auto cell = make_cell("clamp_g" + param_name(gamma), "clamp", gamma, layers, total);
    result.conditions.push_back(run_condition(bundle, tokenizer, settings, result.baseline, specs, std::move(cell)));
  }
  return result;
}

nlohmann::json to_json(const ConditionResult& c, bool include_texts) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : c.samples) {
    nlohmann::json j = {{"prompt_index", s.prompt_index}, {"seed", s.seed}, {"style_score", s.style_score}};
    if (include_texts) j["continuation"] = s.continuation;
    if (!s.error.empty()) j["error"] = s.error;
    samples.push_back(std::move(j));
  }
  nlohmann::json j = {
      {"name", c.name},           {"method", c.method},         {"parameter", c.parameter},
      {"layers", c.layers},       {"neurons", c.neurons},       {"mean_score", c.mean_score},
      {"sd_score", c.sd_score},   {"degradation_pct", c.degradation_pct}, {"samples", samples},
  };
  if (!c.error.empty()) j["error"] = c.error;
  return j;
}

nlohmann::json to_json(const SuiteResult& r, bool include_texts) {
  nlohmann::json conditions = nlohmann::json::array();
  for (const auto& c : r.conditions) conditions.push_back(to_json(c, include_texts));
  return {{"baseline", to_json(r.baseline, include_texts)},
          {"conditions", conditions},
          {"composite_definition", kCompositeDefinition}};
}

void write_suite_csv(std::ostream& out, const SuiteResult& r) {
  out << "condition,method,parameter,layers,neurons,mean_score,sd_score,degradation_pct,error\n";
  auto row = [&out](const ConditionResult& c) {
    std::string layers;
    for (std::size_t i = 0; i < c.layers.size(); ++i) layers += (i ? ";" : "") + std::to_string(c.layers[i]);
    out << c.name << ',' << c.method << ',' << format_real(c.parameter) << ',' << layers << ',' << c.neurons << ','
        << format_real(c.mean_score) << ',' << format_real(c.sd_score) << ',' << format_real(c.degradation_pct)
        << ",\"" << c.error << "\"\n";
  };
  row(r.baseline);
  for (const auto& c : r.conditions) row(c);
}

ComparisonTable suite_comparison(const SuiteResult& r, const StyleReport& reference) {
  auto texts_of = [](const ConditionResult& c) -> std::optional<std::vector<std::string>> {
    if (!c.error.empty()) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& s : c.samples) {
      if (!s.error.empty()) return std::nullopt;
      out.push_back(s.continuation);
    }
    return out;
  };
  const auto base = texts_of(r.baseline);
  if (!base) throw StageError("baseline generations unavailable for comparison");
  std::vector<std::pair<std::string, std::vector<std::string>>> conditions;
  for (const auto& c : r.conditions) {
    if (auto t = texts_of(c)) conditions.emplace_back(c.name, std::move(*t));
  }
  return compare_table(*base, conditions, reference);
}

}  // namespace stylescope
