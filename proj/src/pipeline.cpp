#include "stylescope/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "stylescope/activations.hpp"
#include "stylescope/checkpoint.hpp"
#include "stylescope/error.hpp"
#include "stylescope/hash.hpp"
#include "stylescope/interpret.hpp"
#include "stylescope/intervene.hpp"
#include "stylescope/stats.hpp"
#include "stylescope/styleval.hpp"

namespace stylescope {

namespace fs = std::filesystem;

namespace {

// Bump when a stage's output format or computation changes, so stale cache
// records stop matching.
constexpr int kStageVersion = 1;

const std::vector<std::pair<Stage, std::string_view>>& stage_names() {
  static const std::vector<std::pair<Stage, std::string_view>> names = {
      {Stage::chunk, "chunk"},       {Stage::style, "style"}, {Stage::extract, "extract"},
      {Stage::rank, "rank"},         {Stage::contexts, "contexts"}, {Stage::lens, "lens"},
      {Stage::steer, "steer"},       {Stage::ablate, "ablate"}, {Stage::report, "report"},
  };
  return names;
}

std::vector<Stage> dependencies(Stage s) {
  switch (s) {
    case Stage::chunk: return {};
    case Stage::style: return {};
    case Stage::extract: return {Stage::chunk};
    case Stage::rank: return {Stage::extract};
    case Stage::contexts: return {Stage::chunk, Stage::rank};
    case Stage::lens: return {};
    case Stage::steer: return {Stage::style, Stage::extract, Stage::rank};
    case Stage::ablate: return {Stage::style, Stage::rank};
    case Stage::report: return {Stage::rank, Stage::contexts, Stage::lens, Stage::steer, Stage::ablate};
  }
  return {};
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::string dump(const nlohmann::json& j) {
  return j.dump(1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, dump(j)); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + path.string() + ": " + e.what());
  }
}

StyleReport style_report_from_json(const nlohmann::json& j) {
  StyleReport r;
  r.avg_word_length = j.at("avg_word_length").get<double>();
  r.short_word_prop = j.at("short_word_prop").get<double>();
  r.long_word_prop = j.at("long_word_prop").get<double>();
  r.avg_sentence_length = j.at("avg_sentence_length").get<double>();
  r.comma_density = j.at("comma_density").get<double>();
  r.semicolon_density = j.at("semicolon_density").get<double>();
  r.word_count = j.at("word_count").get<std::size_t>();
  r.sentence_count = j.at("sentence_count").get<std::size_t>();
  return r;
}

ModelBundle load_model(const ExperimentConfig& c) {
  if (is_raw_checkpoint(c.checkpoint)) return load_checkpoint(c.checkpoint);
  TensorMap tensors = read_safetensors(c.checkpoint);
  const ModelConfig mc = infer_config(tensors, c.n_heads);
  return bundle_from_tensors(tensors, mc);
}

class Context {
 public:
  Context(const ExperimentConfig& c, std::ostream* log) : cfg(c), out(c.output_dir), log_(log) {}

  const ExperimentConfig& cfg;
  fs::path out;

  const Tokenizer& tokenizer() {
    if (!tokenizer_) tokenizer_.emplace(Tokenizer::load(cfg.vocab, cfg.merges));
    return *tokenizer_;
  }

  const ModelBundle& model() {
    if (!bundle_) {
      note("loading checkpoint " + cfg.checkpoint.string());
      bundle_.emplace(load_model(cfg));
    }
    return *bundle_;
  }

  const std::string& input_hash(const std::string& name) {
    auto it = input_hashes_.find(name);
    if (it != input_hashes_.end()) return it->second;
    fs::path p;
    if (name == "checkpoint") p = cfg.checkpoint;
    else if (name == "vocab") p = cfg.vocab;
    else if (name == "merges") p = cfg.merges;
    else if (name == "original") p = cfg.original_corpus;
    else if (name == "comparison") p = cfg.comparison_corpus;
    else throw Error("unknown input " + name);
    return input_hashes_[name] = sha256_file(p);
  }

  const std::map<std::string, std::string>& input_hashes() const { return input_hashes_; }

  std::vector<CorpusChunk> chunks() { return chunks_from_json(read_json(out / "chunks.json")); }

  ActivationMatrix activations(int layer, CorpusLabel label) {
    return load_activation_matrix(out / "activations" / activation_file_name(layer, label));
  }

  std::vector<NeuronScore> full_ranking() {
    std::vector<NeuronScore> scores;
    const auto doc = read_json(out / "scores.json");
    for (const auto& j : doc.at("scores")) scores.push_back(neuron_score_from_json(j));
    return rank_neurons(std::move(scores), parse_rank_key(cfg.rank_by), std::numeric_limits<std::size_t>::max());
  }

  StyleReport reference_style() { return style_report_from_json(read_json(out / "style_reference.json").at("original")); }

  SuiteSettings suite_settings() {
    SuiteSettings s;
    s.generation = cfg.generation;
    s.prompts = cfg.prompts;
    s.seeds = cfg.seeds;
    s.reference = reference_style();
    return s;
  }

  void note(const std::string& msg) {
    if (log_) *log_ << msg << "\n" << std::flush;
  }

 private:
  std::ostream* log_;
  std::optional<Tokenizer> tokenizer_;
  std::optional<ModelBundle> bundle_;
  std::map<std::string, std::string> input_hashes_;
};

struct StageDef {
  std::vector<std::string> inputs;
  std::function<nlohmann::json(const ExperimentConfig&)> params;
  std::function<std::vector<std::string>(Context&)> run;
};

// ---------------------------------------------------------------------------
// Stage bodies. Each reads its inputs from the config and the output
// directory and returns the relative paths it wrote.

std::vector<std::string> run_chunk(Context& ctx) {
  const auto& tok = ctx.tokenizer();
  std::vector<CorpusChunk> all;
  for (auto [label, path] : {std::pair{CorpusLabel::original, ctx.cfg.original_corpus},
                             std::pair{CorpusLabel::comparison, ctx.cfg.comparison_corpus}}) {
    auto chunks = chunk_corpus(read_text(path), label, tok, ctx.cfg.chunk_size, ctx.cfg.overlap);
    ctx.note("  " + std::string(to_string(label)) + ": " + std::to_string(chunks.size()) + " chunks");
    all.insert(all.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
  }
  write_json(ctx.out / "chunks.json", chunks_to_json(all, ctx.cfg.chunk_size, ctx.cfg.overlap));
  return {"chunks.json"};
}

std::vector<std::string> run_style(Context& ctx) {
  const StyleReport orig = stylometrics(read_text(ctx.cfg.original_corpus));
  const StyleReport comp = stylometrics(read_text(ctx.cfg.comparison_corpus));
  write_json(ctx.out / "style_reference.json", {{"original", to_json(orig)}, {"comparison", to_json(comp)}});
  std::ostringstream csv;
  write_style_csv_header(csv);
  write_style_csv_row(csv, "original", orig);
  write_style_csv_row(csv, "comparison", comp);
  write_text(ctx.out / "style_corpora.csv", csv.str());
  return {"style_reference.json", "style_corpora.csv"};
}

std::vector<std::string> run_extract(Context& ctx) {
  const auto& bundle = ctx.model();
  for (int l : ctx.cfg.layers) {
    if (l >= bundle.config.n_layers) {
      throw StageError("layer " + std::to_string(l) + " does not exist in a " +
                       std::to_string(bundle.config.n_layers) + "-layer model");
    }
  }
  const auto chunks = ctx.chunks();
  const std::string manifest_hash = sha256_file(ctx.out / "chunks.json");
  const auto set = extract_activations(bundle, chunks, ctx.cfg.layers, static_cast<float>(ctx.cfg.frequency_threshold));
  std::vector<std::string> outputs;
  fs::create_directories(ctx.out / "activations");
  for (const auto& [key, m] : set) {
    const std::string name = activation_file_name(key.first, key.second);
    save_activation_matrix(ctx.out / "activations" / name, m, manifest_hash);
    outputs.push_back("activations/" + name);
    outputs.push_back("activations/" + name + ".json");
  }
  return outputs;
}

std::vector<std::string> run_rank(Context& ctx) {
  ActivationSet set;
  for (int l : ctx.cfg.layers) {
    for (auto label : {CorpusLabel::original, CorpusLabel::comparison}) set.emplace(ActivationKey{l, label}, ctx.activations(l, label));
  }
  const auto scores = score_all(set, ctx.cfg.stats);
  const auto ranked = rank_neurons(scores, parse_rank_key(ctx.cfg.rank_by), ctx.cfg.top_k);
  const auto summary = summarize_layers(scores, ctx.cfg.d_cutoff);

  std::size_t raw = 0, corrected = 0;
  for (const auto& s : scores) {
    raw += s.significant_raw ? 1 : 0;
    corrected += s.significant_bonferroni ? 1 : 0;
  }
  nlohmann::json all = nlohmann::json::array();
  for (const auto& s : scores) all.push_back(to_json(s));
  write_json(ctx.out / "scores.json",
             {{"neurons", scores.size()},
              {"significant_raw", raw},
              {"significant_bonferroni", corrected},
              {"raw_alpha", ctx.cfg.stats.raw_alpha},
              {"bonferroni_threshold", ctx.cfg.stats.bonferroni.threshold()},
              {"bonferroni_tests", ctx.cfg.stats.bonferroni.tests},
              {"scores", all}});
  std::ostringstream csv;
  write_scores_csv(csv, scores);
  write_text(ctx.out / "scores.csv", csv.str());

  nlohmann::json top = nlohmann::json::array();
  for (const auto& s : ranked) top.push_back(to_json(s));
  write_json(ctx.out / "ranked.json", {{"rank_by", ctx.cfg.rank_by}, {"top_k", ctx.cfg.top_k}, {"neurons", top}});
  std::ostringstream rcsv;
  write_scores_csv(rcsv, ranked);
  write_text(ctx.out / "ranked.csv", rcsv.str());

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& r : summary) layers.push_back(to_json(r));
  write_json(ctx.out / "layer_summary.json", {{"d_cutoff", ctx.cfg.d_cutoff}, {"layers", layers}});
  std::ostringstream lcsv;
  write_layer_summary_csv(lcsv, summary, ctx.cfg.d_cutoff);
  write_text(ctx.out / "layer_summary.csv", lcsv.str());
  ctx.note("  " + std::to_string(scores.size()) + " neurons, " + std::to_string(raw) + " with p < " +
           format_real(ctx.cfg.stats.raw_alpha) + ", " + std::to_string(corrected) + " Bonferroni-significant");
  return {"scores.json", "scores.csv", "ranked.json", "ranked.csv", "layer_summary.json", "layer_summary.csv"};
}

std::vector<std::string> run_contexts(Context& ctx) {
  const auto ranked_json = read_json(ctx.out / "ranked.json").at("neurons");
  std::vector<NeuronScore> picked;
  for (const auto& j : ranked_json) {
    if (picked.size() >= ctx.cfg.context_neurons) break;
    picked.push_back(neuron_score_from_json(j));
  }
  std::map<int, std::vector<int>> by_layer;
  for (const auto& s : picked) by_layer[s.layer].push_back(s.neuron);

  const auto chunks = ctx.chunks();
  std::map<std::pair<int, int>, std::vector<ContextWindow>> found;
  for (const auto& [layer, neurons] : by_layer) {
    auto windows = max_activating_contexts(ctx.model(), chunks, ctx.tokenizer(), layer, neurons,
                                           ctx.cfg.contexts_top_n, ctx.cfg.context_window);
    for (auto& [n, w] : windows) found[{layer, n}] = std::move(w);
  }

  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::vector<ContextWindow>> ordered;
  for (std::size_t r = 0; r < picked.size(); ++r) {
    const auto& s = picked[r];
    const auto& windows = found.at({s.layer, s.neuron});
    nlohmann::json ws = nlohmann::json::array();
    for (const auto& w : windows) ws.push_back(to_json(w));
    entries.push_back({{"rank", r + 1},
                       {"layer", s.layer},
                       {"neuron", s.neuron},
                       {"cohens_d", to_json(s).at("cohens_d")},
                       {"contexts", ws}});
    ordered.push_back(windows);
  }
  write_json(ctx.out / "contexts.json",
             {{"top_n", ctx.cfg.contexts_top_n}, {"window", ctx.cfg.context_window}, {"neurons", entries}});
  std::ostringstream md;
  write_contexts_markdown(md, ordered);
  write_text(ctx.out / "contexts.md", md.str());
  return {"contexts.json", "contexts.md"};
}

std::vector<std::string> run_lens(Context& ctx) {
  const auto& tok = ctx.tokenizer();
  const TokenSequence target = tok.encode(ctx.cfg.lens.target);
  if (target.size() != 1) {
    throw StageError("lens target '" + ctx.cfg.lens.target + "' encodes to " + std::to_string(target.size()) +
                     " tokens; exactly one is required");
  }
  const auto& prompts = ctx.cfg.lens.prompts.empty() ? ctx.cfg.prompts : ctx.cfg.lens.prompts;
  std::vector<LensReport> reports;
  nlohmann::json js = nlohmann::json::array();
  for (const auto& p : prompts) {
    reports.push_back(lens_report(ctx.model(), tok, p, ctx.cfg.lens.position, target[0]));
    js.push_back(to_json(reports.back(), tok));
  }
  write_json(ctx.out / "lens.json", {{"target", ctx.cfg.lens.target}, {"target_id", target[0]}, {"reports", js}});
  std::ostringstream csv;
  write_lens_csv(csv, reports);
  write_text(ctx.out / "lens.csv", csv.str());
  return {"lens.json", "lens.csv"};
}

std::vector<std::string> run_steer(Context& ctx) {
  const auto settings = ctx.suite_settings();
  std::vector<int> layers = ctx.cfg.steering.layers.empty() ? ctx.cfg.layers : ctx.cfg.steering.layers;
  std::map<int, std::vector<float>> vectors;
  for (int l : layers) {
    if (std::find(ctx.cfg.layers.begin(), ctx.cfg.layers.end(), l) == ctx.cfg.layers.end()) {
      throw StageError("steering layer " + std::to_string(l) + " was not extracted");
    }
    vectors[l] = style_vector(ctx.activations(l, CorpusLabel::original), ctx.activations(l, CorpusLabel::comparison));
  }
  SteeringGrid grid = ctx.cfg.steering;
  grid.layers = layers;
  const auto result = run_steering_suite(ctx.model(), ctx.tokenizer(), ctx.full_ranking(), vectors, settings, grid);
  write_json(ctx.out / "steering.json", to_json(result));
  std::ostringstream csv;
  write_suite_csv(csv, result);
  write_text(ctx.out / "steering.csv", csv.str());

  const auto table = suite_comparison(result, settings.reference);
  write_json(ctx.out / "steering_comparison.json", to_json(table));
  std::ostringstream tcsv, tmd;
  write_comparison_csv(tcsv, table);
  write_comparison_markdown(tmd, table);
  write_text(ctx.out / "steering_comparison.csv", tcsv.str());
  write_text(ctx.out / "steering_comparison.md", tmd.str());
  return {"steering.json", "steering.csv", "steering_comparison.json", "steering_comparison.csv",
          "steering_comparison.md"};
}

std::vector<std::string> run_ablate(Context& ctx) {
  const auto settings = ctx.suite_settings();
  const auto ranking = ctx.full_ranking();
  const ConditionResult baseline = run_baseline(ctx.model(), ctx.tokenizer(), settings);
  nlohmann::json plans = nlohmann::json::array();
  std::ostringstream csv;
  csv << "plan,";
  bool header = true;
  for (const auto& plan : ctx.cfg.ablation_plans) {
    const auto result = run_ablation_suite(ctx.model(), ctx.tokenizer(), ranking, settings, plan, &baseline);
    nlohmann::json conditions = nlohmann::json::array();
    for (const auto& c : result.conditions) conditions.push_back(to_json(c));
    plans.push_back({{"plan", to_string(plan.kind)}, {"conditions", conditions}});

    std::ostringstream part;
    write_suite_csv(part, result);
    std::istringstream lines(part.str());
    std::string line;
    std::getline(lines, line);
    if (header) csv << line << "\n";
    header = false;
    while (std::getline(lines, line)) csv << to_string(plan.kind) << ',' << line << "\n";
  }
  write_json(ctx.out / "ablation.json", {{"baseline", to_json(baseline)},
                                         {"plans", plans},
                                         {"composite_definition", kCompositeDefinition}});
  write_text(ctx.out / "ablation.csv", csv.str());
  return {"ablation.json", "ablation.csv"};
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return format_real(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> run_report(Context& ctx) {
  std::ostringstream md;
  md << "# Stylescope report\n\n";
  md << "Checkpoint sha256: `" << ctx.input_hash("checkpoint") << "`\n\n";

  const auto scores = read_json(ctx.out / "scores.json");
  md << "## Neuron statistics\n\n";
  md << scores.at("neurons").get<std::size_t>() << " neurons scored; " << scores.at("significant_raw").get<std::size_t>()
     << " with p < " << format_real(scores.at("raw_alpha").get<double>()) << ", "
     << scores.at("significant_bonferroni").get<std::size_t>() << " below the Bonferroni threshold "
     << format_real(scores.at("bonferroni_threshold").get<double>()) << ".\n\n";

  const auto summary = read_json(ctx.out / "layer_summary.json");
  md << "| layer | mean abs d | max abs d | abs d > " << format_real(summary.at("d_cutoff").get<double>())
     << " | p < raw alpha | Bonferroni |\n|---|---|---|---|---|---|\n";
  for (const auto& r : summary.at("layers")) {
    md << "| " << r.at("layer").get<int>() << " | " << fixed(r.at("mean_abs_d").get<double>(), 3) << " | "
       << fixed(r.at("max_abs_d").get<double>(), 3) << " | " << r.at("count_above_cutoff").get<std::size_t>() << " | "
       << r.at("significant_raw").get<std::size_t>() << " | " << r.at("significant_bonferroni").get<std::size_t>()
       << " |\n";
  }

  md << "\n## Top neurons\n\n| rank | neuron | d | t | p | freq orig | freq comp | point-biserial |\n"
        "|---|---|---|---|---|---|---|---|\n";
  int rank = 1;
  const auto ranked = read_json(ctx.out / "ranked.json");
  for (const auto& j : ranked.at("neurons")) {
    if (rank > 20) break;
    const auto s = neuron_score_from_json(j);
    md << "| " << rank++ << " | L" << s.layer << "N" << s.neuron << " | " << fixed(s.cohens_d, 3) << " | "
       << fixed(s.t_stat, 3) << " | " << format_real(s.p_value) << " | " << fixed(s.activation_frequency_orig, 3)
       << " | " << fixed(s.activation_frequency_comparison, 3) << " | " << fixed(s.point_biserial, 3) << " |\n";
  }

  md << "\n## Max-activating contexts\n\nSee `contexts.md` for every ranked neuron; the strongest context of each "
        "is shown here.\n\n";
  const auto contexts = read_json(ctx.out / "contexts.json");
  for (const auto& n : contexts.at("neurons")) {
    const auto& cs = n.at("contexts");
    if (cs.empty()) continue;
    const auto& c = cs.front();
    md << "- L" << n.at("layer").get<int>() << "N" << n.at("neuron").get<int>() << " ("
       << fixed(c.at("activation").get<double>(), 3) << "): `" << c.at("before").get<std::string>() << "[["
       << c.at("center_text").get<std::string>() << "]]" << c.at("after").get<std::string>() << "`\n";
  }

  const auto lens = read_json(ctx.out / "lens.json");
  md << "\n## Logit lens\n\nTarget token `" << lens.at("target").get<std::string>() << "` (id "
     << lens.at("target_id").get<int>() << ").\n\n";
  int pi = 0;
  for (const auto& r : lens.at("reports")) {
    md << "Prompt " << pi++ << ", position " << r.at("position").get<int>() << ":\n\n| layer | logit | rank |\n|---|---|---|\n";
    for (const auto& row : r.at("layers")) {
      md << "| " << row.at("layer").get<int>() << " | " << fixed(row.at("target_logit").get<double>(), 3) << " | "
         << row.at("target_rank").get<int>() << " |\n";
    }
    md << "\n";
  }

  auto condition_table = [&md](const nlohmann::json& conditions) {
    md << "| condition | neurons | mean score | sd | degradation (%) |\n|---|---|---|---|---|\n";
    for (const auto& c : conditions) {
      md << "| " << c.at("name").get<std::string>() << " | " << c.at("neurons").get<std::size_t>() << " | ";
      if (c.contains("error")) {
        md << "failed: " << c.at("error").get<std::string>() << " | | |\n";
        continue;
      }
      md << fixed(c.at("mean_score").get<double>(), 4) << " | " << fixed(c.at("sd_score").get<double>(), 4) << " | "
         << fixed(c.at("degradation_pct").get<double>(), 2) << " |\n";
    }
  };

  const auto steering = read_json(ctx.out / "steering.json");
  md << "## Steering\n\nBaseline style score " << fixed(steering.at("baseline").at("mean_score").get<double>(), 4)
     << ".\n\n";
  condition_table(steering.at("conditions"));
  md << "\n" << read_text(ctx.out / "steering_comparison.md");

  const auto ablation = read_json(ctx.out / "ablation.json");
  md << "\n## Ablation\n\nBaseline style score " << fixed(ablation.at("baseline").at("mean_score").get<double>(), 4)
     << ".\n\n";
  for (const auto& p : ablation.at("plans")) {
    md << "### " << p.at("plan").get<std::string>() << "\n\n";
    condition_table(p.at("conditions"));
    md << "\n";
  }
  md << "Style score: " << kCompositeDefinition << ". Degradation = (baseline - condition) / baseline x 100.\n";
  write_text(ctx.out / "report.md", md.str());
  return {"report.md"};
}

const std::map<Stage, StageDef>& stage_defs() {
  static const std::map<Stage, StageDef> defs = [] {
    std::map<Stage, StageDef> d;
    d[Stage::chunk] = {{"vocab", "merges", "original", "comparison"},
                       [](const ExperimentConfig& c) {
                         return nlohmann::json{{"chunk_size", c.chunk_size}, {"overlap", c.overlap}};
                       },
                       run_chunk};
    d[Stage::style] = {{"original", "comparison"}, [](const ExperimentConfig&) { return nlohmann::json::object(); },
                       run_style};
    d[Stage::extract] = {{"checkpoint"},
                         [](const ExperimentConfig& c) {
                           nlohmann::json j = {{"layers", c.layers}, {"frequency_threshold", c.frequency_threshold}};
                           if (c.n_heads) j["n_heads"] = *c.n_heads;
                           return j;
                         },
                         run_extract};
    d[Stage::rank] = {{},
                      [](const ExperimentConfig& c) {
                        return nlohmann::json{{"stats", c.to_json().at("stats")}, {"layers", c.layers}};
                      },
                      run_rank};
    d[Stage::contexts] = {{"checkpoint", "vocab", "merges"},
                          [](const ExperimentConfig& c) { return c.to_json().at("contexts"); }, run_contexts};
    d[Stage::lens] = {{"checkpoint", "vocab", "merges"},
                      [](const ExperimentConfig& c) {
                        return nlohmann::json{{"lens", c.to_json().at("lens")}, {"prompts", c.prompts}};
                      },
                      run_lens};
    d[Stage::steer] = {{"checkpoint", "vocab", "merges"},
                       [](const ExperimentConfig& c) {
                         const auto j = c.to_json();
                         return nlohmann::json{
                             {"generation", j.at("generation")}, {"steering", j.at("steering")}, {"layers", c.layers}};
                       },
                       run_steer};
    d[Stage::ablate] = {{"checkpoint", "vocab", "merges"},
                        [](const ExperimentConfig& c) {
                          const auto j = c.to_json();
                          return nlohmann::json{{"generation", j.at("generation")}, {"ablation", j.at("ablation")}};
                        },
                        run_ablate};
    d[Stage::report] = {{"checkpoint"}, [](const ExperimentConfig&) { return nlohmann::json::object(); }, run_report};
    return d;
  }();
  return defs;
}

std::string stage_key(Context& ctx, Stage stage, const std::map<Stage, StageStatus>& done) {
  const auto& def = stage_defs().at(stage);
  Sha256 h;
  h.field(to_string(stage)).field(std::to_string(kStageVersion)).field(def.params(ctx.cfg).dump());
  for (const auto& in : def.inputs) h.field(in).field(ctx.input_hash(in));
  for (Stage dep : dependencies(stage)) {
    const auto& st = done.at(dep);
    h.field(to_string(dep));
    for (const auto& [file, hash] : st.outputs) h.field(file).field(hash);
  }
  return h.hex();
}

fs::path record_path(const fs::path& out, Stage s) { return out / ".cache" / (std::string(to_string(s)) + ".json"); }

std::optional<std::map<std::string, std::string>> cached_outputs(const fs::path& out, Stage s, const std::string& key) {
  const fs::path rec = record_path(out, s);
  if (!fs::exists(rec)) return std::nullopt;
  nlohmann::json j;
  try {
    j = read_json(rec);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (j.value("key", "") != key) return std::nullopt;
  std::map<std::string, std::string> outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  for (const auto& [file, hash] : outputs) {
    if (!fs::exists(out / file) || sha256_file(out / file) != hash) return std::nullopt;
  }
  return outputs;
}

}  // namespace

std::string_view to_string(Stage stage) {
  for (const auto& [s, n] : stage_names()) {
    if (s == stage) return n;
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (const auto& [s, n] : stage_names()) {
    if (n == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> v;
    for (const auto& [s, n] : stage_names()) v.push_back(s);
    return v;
  }();
  return stages;
}

std::vector<Stage> stage_closure(const std::vector<Stage>& targets) {
  std::set<Stage> need;
  std::function<void(Stage)> visit = [&](Stage s) {
    if (!need.insert(s).second) return;
    for (Stage d : dependencies(s)) visit(d);
  };
  for (Stage t : targets.empty() ? all_stages() : targets) visit(t);
  std::vector<Stage> ordered;
  for (Stage s : all_stages()) {
    if (need.count(s)) ordered.push_back(s);
  }
  return ordered;
}

nlohmann::json chunks_to_json(const std::vector<CorpusChunk>& chunks, std::size_t chunk_size, std::size_t overlap) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : chunks) {
    list.push_back({{"label", std::string(to_string(c.label))},
                    {"index", c.index},
                    {"token_begin", c.token_begin},
                    {"token_count", c.tokens.size()},
                    {"byte_begin", c.byte_begin},
                    {"byte_end", c.byte_end},
                    {"tokens", c.tokens}});
  }
  return {{"chunk_size", chunk_size}, {"overlap", overlap}, {"chunks", list}};
}

std::vector<CorpusChunk> chunks_from_json(const nlohmann::json& j) {
  std::vector<CorpusChunk> out;
  for (const auto& c : j.at("chunks")) {
    CorpusChunk chunk;
    chunk.label = parse_corpus_label(c.at("label").get<std::string>());
    chunk.index = c.at("index").get<int>();
    chunk.token_begin = c.at("token_begin").get<std::size_t>();
    chunk.byte_begin = c.at("byte_begin").get<std::size_t>();
    chunk.byte_end = c.at("byte_end").get<std::size_t>();
    chunk.tokens = c.at("tokens").get<TokenSequence>();
    out.push_back(std::move(chunk));
  }
  return out;
}

std::vector<std::string> expected_artifacts(const ExperimentConfig& config) {
  std::vector<std::string> files = {"chunks.json",        "style_reference.json",    "style_corpora.csv",
                                    "scores.json",        "scores.csv",              "ranked.json",
                                    "ranked.csv",         "layer_summary.json",      "layer_summary.csv",
                                    "contexts.json",      "contexts.md",             "lens.json",
                                    "lens.csv",           "steering.json",           "steering.csv",
                                    "steering_comparison.json", "steering_comparison.csv", "steering_comparison.md",
                                    "ablation.json",      "ablation.csv",            "report.md",
                                    "manifest.json"};
  for (int l : config.layers) {
    for (auto label : {CorpusLabel::original, CorpusLabel::comparison}) {
      files.push_back("activations/" + activation_file_name(l, label));
      files.push_back("activations/" + activation_file_name(l, label) + ".json");
    }
  }
  return files;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written != static_cast<ssize_t>(pid.size())) throw IoError("cannot write " + path_.string());
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create " + path_.string() + ": " + std::strerror(errno));
    long owner = 0;
    {
      std::ifstream in(path_);
      in >> owner;
    }
    const bool alive = owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM);
    if (alive) {
      throw StageError("output directory " + dir.string() + " is locked by process " + std::to_string(owner));
    }
    fs::remove(path_);  // stale
  }
  throw StageError("could not lock " + dir.string());
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  PipelineResult result;
  try {
    config.validate();
  } catch (const Error& e) {
    result.exit_code = kExitConfigError;
    result.error = e.what();
    return result;
  }

  std::optional<DirectoryLock> lock;
  try {
    lock.emplace(config.output_dir);
  } catch (const Error& e) {
    result.exit_code = kExitStageFailure;
    result.error = e.what();
    return result;
  }

  Context ctx(config, options.log);
  const auto stages = stage_closure(options.targets);
  std::map<Stage, StageStatus> done;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage stage = stages[i];
    StageStatus status;
    status.stage = stage;
    try {
      const std::string key = stage_key(ctx, stage, done);
      std::optional<std::map<std::string, std::string>> hit;
      if (!options.force) hit = cached_outputs(ctx.out, stage, key);
      if (hit) {
        status.cache_hit = true;
        status.outputs = *hit;
        ctx.note("[" + std::string(to_string(stage)) + "] cache hit");
      } else {
        ctx.note("[" + std::string(to_string(stage)) + "] running");
        const auto t0 = std::chrono::steady_clock::now();
        fs::remove(record_path(ctx.out, stage));
        for (const auto& file : stage_defs().at(stage).run(ctx)) status.outputs[file] = sha256_file(ctx.out / file);
        write_json(record_path(ctx.out, stage), {{"key", key}, {"outputs", status.outputs}});
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ctx.note("[" + std::string(to_string(stage)) + "] done in " + fixed(secs, 2) + " s");
      }
    } catch (const std::exception& e) {
      status.error = e.what();
      result.stages.push_back(status);
      result.exit_code = kExitStageFailure;
      result.error = std::string(to_string(stage)) + ": " + e.what();
      nlohmann::json skipped = nlohmann::json::array();
      for (std::size_t k = i + 1; k < stages.size(); ++k) skipped.push_back(std::string(to_string(stages[k])));
      try {
        write_json(ctx.out / "failure.json",
                   {{"stage", std::string(to_string(stage))}, {"error", e.what()}, {"skipped", skipped}});
      } catch (const std::exception&) {
      }
      ctx.note("[" + std::string(to_string(stage)) + "] failed: " + e.what());
      return result;
    }
    done[stage] = status;
    result.stages.push_back(status);
  }

  nlohmann::json stage_json = nlohmann::json::object();
  for (const auto& [stage, st] : done) {
    std::string key;
    try {
      key = read_json(record_path(ctx.out, stage)).at("key").get<std::string>();
    } catch (const std::exception&) {
    }
    stage_json[std::string(to_string(stage))] = {{"key", key}, {"outputs", st.outputs}};
  }
  write_json(ctx.out / "manifest.json", {{"tool", "stylescope"},
                                         {"stage_version", kStageVersion},
                                         {"config", config.to_json()},
                                         {"inputs", ctx.input_hashes()},
                                         {"seeds", config.seeds},
                                         {"stages", stage_json}});
  std::error_code ec;
  fs::remove(ctx.out / "failure.json", ec);
  return result;
}

}  // namespace stylescope
