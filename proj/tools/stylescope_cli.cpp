// stylescope command line: pipeline stages, standalone stylometrics and a
// tiny-checkpoint generator for desk runs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "stylescope/checkpoint.hpp"
#include "stylescope/config.hpp"
#include "stylescope/error.hpp"
#include "stylescope/pipeline.hpp"
#include "stylescope/styleval.hpp"

namespace fs = std::filesystem;
using namespace stylescope;

namespace {

// Options shared by the pipeline subcommands. Flags become "dotted.key=value"
// overrides applied after the config file, so a flag always wins.
struct PipelineFlags {
  std::string config;
  std::vector<std::string> sets;
  bool force = false;
  bool quiet = false;

  std::string checkpoint, vocab, merges, original, comparison, output_dir, rank_by;
  std::vector<int> layers;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> chunk_size, overlap, top_k;
  std::optional<int> max_new_tokens;
  std::optional<double> temperature, nucleus_p;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "experiment config (TOML or JSON)");
    app->add_option("--set", sets, "override a config key, e.g. --set stats.top_k=100")->take_all();
    app->add_flag("--force", force, "ignore cached stage results");
    app->add_flag("-q,--quiet", quiet, "no progress log");
    app->add_option("--checkpoint", checkpoint, "model.checkpoint");
    app->add_option("--vocab", vocab, "model.vocab");
    app->add_option("--merges", merges, "model.merges");
    app->add_option("--original", original, "corpus.original");
    app->add_option("--comparison", comparison, "corpus.comparison");
    app->add_option("-o,--output-dir", output_dir, "output.dir");
    app->add_option("--layers", layers, "extract.layers")->delimiter(',');
    app->add_option("--chunk-size", chunk_size, "corpus.chunk_size");
    app->add_option("--overlap", overlap, "corpus.overlap");
    app->add_option("--rank-by", rank_by, "stats.rank_by");
    app->add_option("--top-k", top_k, "stats.top_k");
    app->add_option("--seeds", seeds, "generation.seeds")->delimiter(',');
    app->add_option("--max-new-tokens", max_new_tokens, "generation.max_new_tokens");
    app->add_option("--temperature", temperature, "generation.temperature");
    app->add_option("--nucleus-p", nucleus_p, "generation.nucleus_p");
  }

  std::vector<std::string> overrides() const {
    std::vector<std::string> out = sets;
    auto path = [&out](const char* key, const std::string& v) {
      if (!v.empty()) out.push_back(std::string(key) + "=" + nlohmann::json(fs::absolute(v).string()).dump());
    };
    auto value = [&out](const char* key, const nlohmann::json& v) { out.push_back(std::string(key) + "=" + v.dump()); };
    path("model.checkpoint", checkpoint);
    path("model.vocab", vocab);
    path("model.merges", merges);
    path("corpus.original", original);
    path("corpus.comparison", comparison);
    path("output.dir", output_dir);
    if (!layers.empty()) value("extract.layers", layers);
    if (!seeds.empty()) value("generation.seeds", seeds);
    if (!rank_by.empty()) value("stats.rank_by", rank_by);
    if (chunk_size) value("corpus.chunk_size", *chunk_size);
    if (overlap) value("corpus.overlap", *overlap);
    if (top_k) value("stats.top_k", *top_k);
    if (max_new_tokens) value("generation.max_new_tokens", *max_new_tokens);
    if (temperature) value("generation.temperature", *temperature);
    if (nucleus_p) value("generation.nucleus_p", *nucleus_p);
    return out;
  }

  ExperimentConfig load() const {
    if (!config.empty()) return load_experiment_config(config, overrides());
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& o : overrides()) apply_override(doc, o);
    return experiment_config_from_json(doc, fs::current_path());
  }
};

int run_stages(const PipelineFlags& flags, std::vector<Stage> targets) {
  ExperimentConfig cfg;
  try {
    cfg = flags.load();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  PipelineOptions opts;
  opts.targets = std::move(targets);
  opts.force = flags.force;
  opts.log = flags.quiet ? nullptr : &std::cerr;
  const PipelineResult r = run_pipeline(cfg, opts);
  if (r.exit_code == kExitConfigError) {
    std::cerr << "config error: " << r.error << "\n";
  } else if (r.exit_code != kExitOk) {
    std::cerr << "stage failure: " << r.error << "\n";
  } else if (!flags.quiet) {
    std::size_t hits = 0;
    for (const auto& s : r.stages) hits += s.cache_hit ? 1 : 0;
    std::cerr << r.stages.size() << " stages ok (" << hits << " cached), output in " << cfg.output_dir.string()
              << "\n";
  }
  return r.exit_code;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int style_files(const std::vector<std::string>& files, const std::string& reference, bool json) {
  std::optional<StyleReport> ref;
  if (!reference.empty()) ref = stylometrics(read_file(reference));
  nlohmann::json out = nlohmann::json::array();
  if (!json) write_style_csv_header(std::cout);
  for (const auto& f : files) {
    StyleReport r = stylometrics(read_file(f));
    if (ref) r.composite_score = composite_style_score(r, *ref);
    if (json) {
      auto j = to_json(r);
      j["file"] = f;
      out.push_back(j);
    } else {
      write_style_csv_row(std::cout, f, r);
    }
  }
  if (json) std::cout << out.dump(1) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neuron-level style analysis and steering for GPT-2 checkpoints"};
  app.require_subcommand(1);

  struct StageCommand {
    const char* name;
    const char* help;
    std::vector<Stage> targets;
  };
  const std::vector<StageCommand> commands = {
      {"extract", "chunk both corpora and store MLP activation matrices", {Stage::extract}},
      {"rank", "score and rank every neuron", {Stage::rank}},
      {"contexts", "max-activating contexts for the top neurons", {Stage::contexts}},
      {"lens", "logit-lens trajectories of the target token", {Stage::lens}},
      {"steer", "additive, multiplicative and clamp steering sweeps", {Stage::steer}},
      {"ablate", "zero-ablation experiments", {Stage::ablate}},
      {"run", "the full pipeline", {}},
      {"report", "rebuild report.md from stored artifacts", {Stage::report}},
  };
  std::vector<PipelineFlags> flags(commands.size() + 1);
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto* sub = app.add_subcommand(commands[i].name, commands[i].help);
    flags[i].attach(sub);
    subs.push_back(sub);
  }

  // style: either the pipeline stage or ad hoc files
  auto* style = app.add_subcommand("style", "stylometrics of the corpora, or of the given text files");
  PipelineFlags& style_flags = flags.back();
  style_flags.attach(style);
  std::vector<std::string> style_inputs;
  std::string style_reference;
  bool style_json = false;
  style->add_option("files", style_inputs, "text files to measure (skips the pipeline)");
  style->add_option("--reference", style_reference, "reference text for the composite score");
  style->add_flag("--json", style_json, "JSON instead of CSV");

  auto* tiny = app.add_subcommand("init-tiny", "write a small random GPT-2-shaped checkpoint");
  std::string tiny_out;
  std::uint64_t tiny_seed = 7;
  ModelConfig tiny_cfg;
  tiny_cfg.n_layers = 2;
  tiny_cfg.n_heads = 4;
  tiny_cfg.d_model = 32;
  tiny_cfg.d_mlp = 128;
  float wte_scale = 1.0f;
  tiny->add_option("output", tiny_out, "checkpoint path")->required();
  tiny->add_option("--seed", tiny_seed, "weight stream seed");
  tiny->add_option("--layers", tiny_cfg.n_layers, "transformer blocks");
  tiny->add_option("--heads", tiny_cfg.n_heads, "attention heads");
  tiny->add_option("--d-model", tiny_cfg.d_model, "residual width");
  tiny->add_option("--d-mlp", tiny_cfg.d_mlp, "MLP width");
  tiny->add_option("--n-ctx", tiny_cfg.n_ctx, "context length");
  tiny->add_option("--wte-scale", wte_scale, "half-width of the token embedding distribution");
  tiny->add_flag("--safetensors", "write safetensors instead of the raw container");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (subs[i]->parsed()) return run_stages(flags[i], commands[i].targets);
    }
    if (style->parsed()) {
      if (!style_inputs.empty()) return style_files(style_inputs, style_reference, style_json);
      return run_stages(style_flags, {Stage::style});
    }
    if (tiny->parsed()) {
      tiny_cfg.validate();
      SyntheticScales scales;
      scales.token_embedding = wte_scale;
      const TensorMap tensors = synthetic_checkpoint(tiny_cfg, tiny_seed, scales);
      if (tiny->count("--safetensors")) write_safetensors(tiny_out, tensors);
      else write_raw_checkpoint(tiny_out, tiny_cfg, tensors);
      std::cerr << "wrote " << tiny_out << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return kExitOk;
}
