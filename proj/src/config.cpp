#include "stylescope/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "stylescope/error.hpp"

namespace stylescope {

namespace fs = std::filesystem;

const std::vector<std::string>& default_prompts() {
  static const std::vector<std::string> prompts = {
      "I am a rather elderly man. The nature of my avocations for the last thirty years has",
      "It was a quiet Sunday afternoon. Ginger Nut, the copyist, sat",
      "Bartleby was an immovably calm scrivener. Day after day, he would",
  };
  return prompts;
}

ExperimentConfig::ExperimentConfig() : prompts(default_prompts()) {
  AblationPlan single;
  single.kind = AblationPlan::Kind::single_top;
  AblationPlan cumulative;
  cumulative.kind = AblationPlan::Kind::cumulative;
  AblationPlan multi;
  multi.kind = AblationPlan::Kind::multi_layer;
  ablation_plans = {single, cumulative, multi};
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw ConfigError(what); }

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) bad(std::string(what) + " path is not set");
  if (!fs::is_regular_file(p)) bad(std::string(what) + " not found: " + p.string());
}

nlohmann::json node_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = node_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(node_to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* d = node.as_floating_point()) return d->get();
  if (const auto* b = node.as_boolean()) return b->get();
  // Dates and times are kept as their TOML text.
  std::ostringstream os;
  if (const auto* d = node.as_date()) os << d->get();
  if (const auto* t = node.as_time()) os << t->get();
  if (const auto* dt = node.as_date_time()) os << dt->get();
  return os.str();
}

template <typename T>
void read(const nlohmann::json& section, const char* key, T& out) {
  if (!section.is_object() || !section.contains(key)) return;
  try {
    out = section.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("config key '") + key + "': " + e.what());
  }
}

void read_path(const nlohmann::json& section, const char* key, fs::path& out, const fs::path& base) {
  std::string s;
  read(section, key, s);
  if (s.empty()) return;
  fs::path p(s);
  out = p.is_absolute() ? p : (base / p).lexically_normal();
}

const nlohmann::json& section(const nlohmann::json& doc, const char* name) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!doc.contains(name)) return empty;
  const auto& s = doc.at(name);
  if (!s.is_object()) bad(std::string("config section [") + name + "] must be a table");
  return s;
}

}  // namespace

nlohmann::json toml_to_json(const std::string& text, const std::string& source_name) {
  try {
    const toml::table t = toml::parse(text, source_name);
    return node_to_json(t);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e;
    bad("TOML parse error: " + os.str());
  }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) bad("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) bad("override key '" + key + "' has an empty component");
    if (!node->is_object()) bad("override key '" + key + "' descends into a non-table");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) bad("config root must be a table");
  static const std::vector<std::string> known = {"model",    "corpus",     "extract",  "stats",    "contexts",
                                                 "lens",     "generation", "steering", "ablation", "output"};
  for (const auto& [k, v] : doc.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) bad("unknown config section '" + k + "'");
  }

  ExperimentConfig c;
  const auto& model = section(doc, "model");
  std::string checkpoint;
  read(model, "checkpoint", checkpoint);
  if (!checkpoint.empty()) {
    fs::path p(checkpoint);
    if (p.is_absolute()) {
      c.checkpoint = p;
    } else if (const char* env = std::getenv("STYLESCOPE_CHECKPOINT_DIR"); env && *env) {
      c.checkpoint = (fs::path(env) / p).lexically_normal();
    } else {
      c.checkpoint = (base_dir / p).lexically_normal();
    }
  }
  if (model.contains("n_heads")) c.n_heads = model.at("n_heads").get<int>();
  read_path(model, "vocab", c.vocab, base_dir);
  read_path(model, "merges", c.merges, base_dir);

  const auto& corpus = section(doc, "corpus");
  read_path(corpus, "original", c.original_corpus, base_dir);
  read_path(corpus, "comparison", c.comparison_corpus, base_dir);
  read(corpus, "chunk_size", c.chunk_size);
  read(corpus, "overlap", c.overlap);

  const auto& extract = section(doc, "extract");
  read(extract, "layers", c.layers);
  read(extract, "frequency_threshold", c.frequency_threshold);
  c.stats.frequency_threshold = c.frequency_threshold;

  const auto& stats = section(doc, "stats");
  read(stats, "bonferroni_alpha", c.stats.bonferroni.alpha);
  read(stats, "bonferroni_tests", c.stats.bonferroni.tests);
  read(stats, "raw_alpha", c.stats.raw_alpha);
  read(stats, "rank_by", c.rank_by);
  read(stats, "top_k", c.top_k);
  read(stats, "d_cutoff", c.d_cutoff);

  const auto& contexts = section(doc, "contexts");
  read(contexts, "neurons", c.context_neurons);
  read(contexts, "top_n", c.contexts_top_n);
  read(contexts, "window", c.context_window);

  const auto& lens = section(doc, "lens");
  read(lens, "prompts", c.lens.prompts);
  read(lens, "position", c.lens.position);
  read(lens, "target", c.lens.target);

  const auto& gen = section(doc, "generation");
  read(gen, "max_new_tokens", c.generation.max_new_tokens);
  read(gen, "nucleus_p", c.generation.nucleus_p);
  read(gen, "temperature", c.generation.temperature);
  read(gen, "greedy", c.generation.greedy);
  read(gen, "intervene_prompt", c.generation.intervene_prompt);
  read(gen, "stop_at_eos", c.generation.stop_at_eos);
  read(gen, "prompts", c.prompts);
  read(gen, "seeds", c.seeds);

  const auto& steering = section(doc, "steering");
  read(steering, "alphas", c.steering.alphas);
  read(steering, "betas", c.steering.betas);
  read(steering, "gammas", c.steering.gammas);
  read(steering, "top_k", c.steering.top_k);
  read(steering, "layers", c.steering.layers);

  const auto& ablation = section(doc, "ablation");
  if (ablation.contains("plans")) {
    std::vector<std::string> names;
    read(ablation, "plans", names);
    c.ablation_plans.clear();
    for (const auto& n : names) {
      AblationPlan p;
      p.kind = parse_ablation_kind(n);
      c.ablation_plans.push_back(p);
    }
  }
  for (auto& p : c.ablation_plans) {
    read(ablation, "single_count", p.single_count);
    read(ablation, "counts", p.counts);
    read(ablation, "cumulative_layer", p.cumulative_layer);
    read(ablation, "layer_sets", p.layer_sets);
    read(ablation, "per_layer_k", p.per_layer_k);
  }

  read_path(section(doc, "output"), "dir", c.output_dir, base_dir);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  const bool is_json = path.extension() == ".json" || (first != std::string::npos && text[first] == '{');
  nlohmann::json doc;
  if (is_json) {
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      bad("JSON parse error in " + path.string() + ": " + e.what());
    }
  } else {
    doc = toml_to_json(text, path.string());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return experiment_config_from_json(doc, fs::absolute(path).parent_path());
}

void ExperimentConfig::validate() const {
  require_file(checkpoint, "checkpoint");
  require_file(vocab, "vocab");
  require_file(merges, "merges");
  require_file(original_corpus, "original corpus");
  require_file(comparison_corpus, "comparison corpus");
  if (output_dir.empty()) bad("output directory is not set");
  if (chunk_size == 0) bad("chunk_size must be positive");
  if (overlap >= chunk_size) {
    throw InvalidOverlap("overlap " + std::to_string(overlap) + " must be smaller than chunk_size " +
                         std::to_string(chunk_size));
  }
  if (layers.empty()) bad("no extraction layers");
  for (int l : layers) {
    if (l < 0) bad("negative layer index " + std::to_string(l));
  }
  if (n_heads && *n_heads <= 0) bad("n_heads must be positive");
  if (!(stats.bonferroni.alpha > 0 && stats.bonferroni.alpha < 1)) bad("bonferroni_alpha must lie in (0, 1)");
  if (stats.bonferroni.tests == 0) bad("bonferroni_tests must be positive");
  if (!(stats.raw_alpha > 0 && stats.raw_alpha < 1)) bad("raw_alpha must lie in (0, 1)");
  (void)parse_rank_key(rank_by);
  if (top_k == 0) bad("top_k must be positive");
  if (prompts.empty()) bad("no generation prompts");
  if (seeds.empty()) bad("no generation seeds");
  try {
    generation.validate();
  } catch (const InvalidIntervention& e) {
    bad(e.what());
  }
  for (const auto& a : steering.alphas) {
    if (!std::isfinite(a)) bad("steering alpha must be finite");
  }
  for (const auto& b : steering.betas) {
    if (!std::isfinite(b)) bad("steering beta must be finite");
  }
  for (const auto& g : steering.gammas) {
    if (!std::isfinite(g)) bad("steering gamma must be finite");
  }
  if (lens.target.empty()) bad("lens target is empty");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json plans = nlohmann::json::array();
  for (const auto& p : ablation_plans) plans.push_back(stylescope::to_string(p.kind));
  const AblationPlan first = ablation_plans.empty() ? AblationPlan{} : ablation_plans.front();
  nlohmann::json j = {
      {"model",
       {{"checkpoint", checkpoint.string()}, {"vocab", vocab.string()}, {"merges", merges.string()}}},
      {"corpus",
       {{"original", original_corpus.string()},
        {"comparison", comparison_corpus.string()},
        {"chunk_size", chunk_size},
        {"overlap", overlap}}},
      {"extract", {{"layers", layers}, {"frequency_threshold", frequency_threshold}}},
      {"stats",
       {{"bonferroni_alpha", stats.bonferroni.alpha},
        {"bonferroni_tests", stats.bonferroni.tests},
        {"raw_alpha", stats.raw_alpha},
        {"rank_by", rank_by},
        {"top_k", top_k},
        {"d_cutoff", d_cutoff}}},
      {"contexts", {{"neurons", context_neurons}, {"top_n", contexts_top_n}, {"window", context_window}}},
      {"lens", {{"prompts", lens.prompts}, {"position", lens.position}, {"target", lens.target}}},
      {"generation",
       {{"max_new_tokens", generation.max_new_tokens},
        {"nucleus_p", generation.nucleus_p},
        {"temperature", generation.temperature},
        {"greedy", generation.greedy},
        {"intervene_prompt", generation.intervene_prompt},
        {"stop_at_eos", generation.stop_at_eos},
        {"prompts", prompts},
        {"seeds", seeds}}},
      {"steering",
       {{"alphas", steering.alphas},
        {"betas", steering.betas},
        {"gammas", steering.gammas},
        {"top_k", steering.top_k},
        {"layers", steering.layers}}},
      {"ablation",
       {{"plans", plans},
        {"single_count", first.single_count},
        {"counts", first.counts},
        {"cumulative_layer", first.cumulative_layer},
        {"layer_sets", first.layer_sets},
        {"per_layer_k", first.per_layer_k}}},
      {"output", {{"dir", output_dir.string()}}},
  };
  if (n_heads) j["model"]["n_heads"] = *n_heads;
  return j;
}

}  // namespace stylescope
