// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <sys/wait.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stylescope/checkpoint.hpp"
#include "stylescope/config.hpp"
#include "stylescope/error.hpp"
#include "stylescope/hash.hpp"
#include "stylescope/intervene.hpp"
#include "stylescope/model.hpp"
#include "stylescope/pipeline.hpp"
#include "stylescope/sampling.hpp"
#include "stylescope/stats.hpp"
#include "stylescope/styleval.hpp"
#include "support.hpp"

using namespace stylescope;
namespace fs = std::filesystem;
using test_support::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed checks; the first few messages go into the detail line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) {
      ++failures_;
      if (messages_.size() < 4) messages_.push_back(what);
    }
  }
  Outcome outcome(const std::string& summary) const {
    std::ostringstream os;
    os << summary << " [" << (checks_ - failures_) << "/" << checks_ << " checks]";
    for (const auto& m : messages_) os << "; " << m;
    return {failures_ == 0, os.str()};
  }

 private:
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::vector<std::string> messages_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// 1. Tokenizer against reference ids, and random round trips.
Outcome ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  const auto tok = Tokenizer::load(test_support::vocab_path(), test_support::merges_path());
  const auto doc = nlohmann::json::parse(test_support::read_file(test_support::fixture("tokenizer_fixture.json")));
  const auto& cases = doc.at("cases");
  c.expect(cases.size() >= 50, "fewer than 50 fixture strings");
  std::size_t matched = 0;
  for (const auto& k : cases) {
    const bool ok = tok.encode(k.at("text").get<std::string>()) == k.at("ids").get<TokenSequence>();
    matched += ok;
    c.expect(ok, "ids differ for " + k.at("text").dump());
  }
  std::mt19937_64 rng(20240601);
  std::size_t round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::string s = test_support::random_utf8(rng, 64);
    const bool ok = tok.decode(tok.encode(s)) == s;
    round_trips += ok;
    c.expect(ok, "round trip " + std::to_string(i) + " not byte-exact");
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, "took " + fmt(secs) + " s");
  return c.outcome(std::to_string(matched) + "/" + std::to_string(cases.size()) + " fixture strings, " +
                   std::to_string(round_trips) + "/1000 round trips, " + fmt(secs) + " s");
}

// 2. GPT-2 small architecture through the safetensors loader against
// reference-implementation logits. The weights come from the documented
// splitmix64 stream because trained GPT-2 weights cannot be fetched here.
Outcome ac2() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  const auto doc = nlohmann::json::parse(test_support::read_file(test_support::fixture("forward_fixture.json")));
  const auto cfg = ModelConfig::gpt2_small();
  const auto& fc = doc.at("config");
  c.expect(fc.at("n_layers") == cfg.n_layers && fc.at("d_model") == cfg.d_model && fc.at("n_heads") == cfg.n_heads &&
               fc.at("d_mlp") == cfg.d_mlp && fc.at("vocab_size") == cfg.vocab_size,
           "fixture config is not GPT-2 small");

  TempDir dir("ac2");
  const fs::path file = dir / "model.safetensors";
  {
    const auto tensors = synthetic_checkpoint(cfg, doc.at("seed").get<std::uint64_t>());
    std::size_t params = 0;
    double checksum = 0.0;
    for (const auto& [name, t] : tensors) {
      params += t.values.size();
      for (float v : t.values) checksum += v;
    }
    c.expect(params == doc.at("parameter_count").get<std::size_t>(), "parameter count " + std::to_string(params));
    const double want = doc.at("checksum").get<double>();
    c.expect(std::abs(checksum - want) <= 1e-6 * std::max(1.0, std::abs(want)), "weight checksum " + fmt(checksum, 12));
    write_safetensors(file, tensors);
  }
  ModelBundle bundle;
  {
    const auto tensors = read_safetensors(file);
    bundle = bundle_from_tensors(tensors, infer_config(tensors, 12));
  }
  fs::remove(file);

  std::ifstream blob(test_support::fixture("forward_logits.bin"), std::ios::binary);
  const auto& tok = test_support::gpt2_tokenizer();
  float worst = 0.0f;
  std::size_t positions = 0, agree = 0;
  for (const auto& k : doc.at("cases")) {
    const auto ids = k.at("ids").get<TokenSequence>();
    c.expect(tok.encode(k.at("prompt").get<std::string>()) == ids, "prompt ids differ");
    const auto trace = forward(bundle, ids);
    std::vector<float> ref(ids.size() * static_cast<std::size_t>(cfg.vocab_size));
    blob.read(reinterpret_cast<char*>(ref.data()), static_cast<std::streamsize>(ref.size() * sizeof(float)));
    c.expect(static_cast<bool>(blob), "reference logits truncated");
    const auto ref_argmax = k.at("argmax").get<std::vector<int>>();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const auto row = trace.logits.row(t);
      for (int v = 0; v < cfg.vocab_size; ++v) {
        worst = std::max(worst, std::abs(row[v] - ref[t * cfg.vocab_size + v]));
      }
      const bool same = argmax(row) == ref_argmax[t];
      agree += same;
      ++positions;
    }
  }
  const double secs = seconds_since(t0);
  c.expect(worst <= 1e-3f, "max abs error " + fmt(worst));
  c.expect(agree == positions, "argmax disagreements");
  c.expect(secs < 120.0, "took " + fmt(secs) + " s");
  return c.outcome("124M-parameter GPT-2 small architecture (synthetic weights), max abs error " + fmt(worst) + ", argmax " +
                   std::to_string(agree) + "/" + std::to_string(positions) + ", " + fmt(secs) + " s");
}

// 3. Statistics fixtures and the Bonferroni threshold.
Outcome ac3() {
  using boost::multiprecision::cpp_rational;
  Checker c;
  const auto doc = nlohmann::json::parse(test_support::read_file(test_support::fixture("stats_fixture.json")));
  double worst = 0.0;
  auto close = [&](double got, double want, const std::string& what) {
    const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
    worst = std::max(worst, err);
    c.expect(err <= 1e-9, what + " off by " + fmt(err));
  };
  const auto& samples = doc.at("two_sample");
  c.expect(samples.size() == 20, "expected 20 samples");
  for (const auto& k : samples) {
    const auto xs = k.at("xs").get<std::vector<double>>();
    const auto ys = k.at("ys").get<std::vector<double>>();
    close(cohens_d(xs, ys), k.at("cohens_d"), "cohens_d");
    const auto w = welch_t(xs, ys);
    close(w.t, k.at("welch_t"), "welch t");
    close(w.df, k.at("welch_df"), "welch df");
    close(w.p, k.at("welch_p"), "welch p");
    std::vector<double> values = xs;
    values.insert(values.end(), ys.begin(), ys.end());
    std::vector<int> labels(xs.size(), 1);
    labels.resize(values.size(), 0);
    close(point_biserial(values, labels), k.at("point_biserial"), "point_biserial");
  }

  const Bonferroni b;
  c.expect(b.alpha == 0.001 && b.tests == 98304, "default Bonferroni parameters");
  c.expect(b.threshold() == 0.001 / 98304.0, "threshold is not alpha / tests");
  c.expect(std::abs(b.threshold() - 1.0e-8) < 2e-10, "threshold is not about 1.0e-8");
  // significance must agree with the exact rational comparison p * tests < alpha
  const cpp_rational alpha(b.alpha);
  std::vector<double> probes = {0.0, 1e-300, 1e-9, 1e-8, 2e-8, 0.05, 1.0};
  double p = b.threshold();
  for (int i = 0; i < 8; ++i) p = std::nextafter(p, 0.0);
  for (int i = 0; i < 17; ++i, p = std::nextafter(p, 1.0)) probes.push_back(p);
  for (double q : probes) {
    const bool exact = cpp_rational(q) * cpp_rational(b.tests) < alpha;
    c.expect(b.significant(q) == exact, "significance of p=" + fmt(q, 17) + " differs from exact comparison");
  }
  return c.outcome("20 samples, worst relative error " + fmt(worst) + ", threshold " + fmt(b.threshold(), 10));
}

// 4. Ten planted columns are recovered as the top ten by |d|.
Outcome ac4() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  const auto model = test_support::tiny_model(404);
  const int layer = 1;
  const int width = model.config.d_mlp;
  // rows: token-level activations of the tiny model on the bundled corpora,
  // alternately assigned to the two groups so both share one distribution
  const auto& tok = test_support::gpt2_tokenizer();
  std::vector<std::vector<float>> rows;
  for (const char* name : {"original.txt", "comparison.txt"}) {
    for (const auto& ch : chunk_corpus(test_support::read_file(test_support::data_file(name)), CorpusLabel::original,
                                       tok, 64, 0)) {
      const auto t = forward(model, ch.tokens, {HookPoint{layer, HookSite::mlp_post_act}});
      const auto& a = t.at({layer, HookSite::mlp_post_act});
      for (std::size_t r = 0; r < a.rows; ++r) rows.emplace_back(a.row(r).begin(), a.row(r).end());
    }
  }
  std::mt19937_64 rng(4);
  std::set<int> planted;
  while (planted.size() < 10) planted.insert(std::uniform_int_distribution<int>(0, width - 1)(rng));

  const std::size_t half = rows.size() / 2;
  ActivationSet set;
  for (auto label : {CorpusLabel::original, CorpusLabel::comparison}) {
    ActivationMatrix m;
    m.layer = layer;
    m.label = label;
    m.values = Matrix(half, static_cast<std::size_t>(width));
    const std::size_t offset = label == CorpusLabel::original ? 0 : 1;
    for (std::size_t r = 0; r < half; ++r) {
      for (int n = 0; n < width; ++n) {
        float v = rows[2 * r + offset][n];
        if (label == CorpusLabel::original && planted.count(n)) v += 1.0f;
        m.values(r, n) = v;
      }
    }
    set.emplace(ActivationKey{layer, label}, std::move(m));
  }
  const auto ranked = rank_neurons(score_all(set), RankKey::abs_cohens_d, 10);
  std::set<int> found;
  for (const auto& s : ranked) {
    found.insert(s.neuron);
    c.expect(s.significant_bonferroni, "neuron " + std::to_string(s.neuron) + " p=" + fmt(s.p_value));
  }
  c.expect(found == planted, "top-10 set differs from the planted columns");
  const double secs = seconds_since(t0);
  c.expect(secs < 10.0, "took " + fmt(secs) + " s");
  return c.outcome(std::to_string(half) + " rows per group x " + std::to_string(width) + " neurons, smallest top-10 |d| " +
                       fmt(std::abs(ranked.back().cohens_d)) + ", " + fmt(secs) + " s");
}

GenerationConfig gen_config(std::uint64_t seed) {
  GenerationConfig g;
  g.max_new_tokens = 40;
  g.seed = seed;
  return g;
}

// 5. Neutral interventions reproduce the baseline; an empty ablation set has
// zero degradation.
Outcome ac5() {
  Checker c;
  const auto model = test_support::tiny_model(505);
  const auto& tok = test_support::gpt2_tokenizer();
  const auto prompt = tok.encode("I am a rather elderly man.");
  const float ninf = -std::numeric_limits<float>::infinity();
  std::vector<int> all(static_cast<std::size_t>(model.config.d_mlp));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  std::size_t compared = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto base = generate(model, prompt, gen_config(seed)).generated;
    for (int layer = 0; layer < model.config.n_layers; ++layer) {
      const std::vector<float> direction(all.size(), 0.8f);
      const std::vector<std::pair<std::string, InterventionSpec>> neutral = {
          {"alpha=0", InterventionSpec::add(layer, direction, 0.0f)},
          {"beta=1", InterventionSpec::scale(layer, all, 1.0f)},
          {"gamma=-inf", InterventionSpec::clamp(layer, all, ninf)},
      };
      for (const auto& [name, spec] : neutral) {
        c.expect(generate(model, prompt, gen_config(seed), {spec}).generated == base,
                 name + " changed the output at layer " + std::to_string(layer));
        ++compared;
      }
    }
  }

  SuiteSettings s;
  s.generation = gen_config(0);
  s.prompts = {"I am a rather elderly man.", "The nature of my avocations"};
  s.seeds = {1, 2};
  s.reference = stylometrics(test_support::read_file(test_support::data_file("original.txt")));
  std::vector<NeuronScore> ranking;
  for (int n = 0; n < 8; ++n) ranking.push_back({.layer = 1, .neuron = n, .cohens_d = 2.0 - 0.1 * n});
  AblationPlan plan;
  plan.counts = {0};
  plan.cumulative_layer = 1;
  AblationPlan layers;
  layers.kind = AblationPlan::Kind::multi_layer;
  layers.layer_sets = {{0}};  // no ranked neuron lives in layer 0
  const auto base = run_baseline(model, tok, s);
  for (const auto* p : {&plan, &layers}) {
    const auto r = run_ablation_suite(model, tok, ranking, s, *p, &base);
    c.expect(r.conditions.size() == 1 && r.conditions[0].neurons == 0, "expected one empty condition");
    c.expect(r.conditions[0].error.empty(), "empty condition failed: " + r.conditions[0].error);
    c.expect(r.conditions[0].degradation_pct == 0.0, "degradation " + fmt(r.conditions[0].degradation_pct));
  }
  return c.outcome(std::to_string(compared) + " neutral generations of 40 tokens compared; empty-set degradation 0%");
}

// 6. Zero-ablation holds at every decoding step.
Outcome ac6() {
  Checker c;
  const auto model = test_support::tiny_model(606);
  const auto prompt = test_support::gpt2_tokenizer().encode("It was a quiet Sunday afternoon.");
  std::size_t steps = 0, cells = 0;
  std::mt19937_64 rng(6);
  for (int layer = 0; layer < model.config.n_layers; ++layer) {
    std::set<int> pick;
    while (pick.size() < 12) pick.insert(std::uniform_int_distribution<int>(0, model.config.d_mlp - 1)(rng));
    const std::vector<int> S(pick.begin(), pick.end());
    StepObserver obs;
    obs.capture = {{layer, HookSite::mlp_post_act}};
    obs.on_step = [&](int, const ForwardTrace& t) {
      const auto& a = t.at({layer, HookSite::mlp_post_act});
      for (std::size_t r = 0; r < a.rows; ++r) {
        for (int n : S) {
          c.expect(a(r, n) == 0.0f, "nonzero ablated activation at layer " + std::to_string(layer));
          ++cells;
        }
      }
      ++steps;
    };
    generate(model, prompt, gen_config(7), {InterventionSpec::ablate(layer, S)}, &obs);
  }
  return c.outcome(std::to_string(steps) + " steps, " + std::to_string(cells) + " ablated cells checked");
}

// 7. Last-layer lens equals the logits; lens ranks equal a full sort.
Outcome ac7() {
  Checker c;
  const auto model = test_support::tiny_model(707);
  const auto& tok = test_support::gpt2_tokenizer();
  float worst = 0.0f;
  std::size_t positions = 0, ranks = 0;
  const TokenId target = tok.encode(" of")[0];
  for (const char* text : {"I am a rather elderly man.", "The nature of my avocations for the last thirty years",
                           "Bartleby was an immovably calm scrivener."}) {
    const auto ids = tok.encode(text);
    const auto trace = forward(model, ids, all_resid_post(model.config));
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      const int last = model.config.n_layers - 1;
      const auto lens = lens_logits(model, trace.at({last, HookSite::resid_post}).row(pos));
      for (int v = 0; v < model.config.vocab_size; ++v) worst = std::max(worst, std::abs(lens[v] - trace.logits(pos, v)));
      ++positions;
      const auto records = logit_lens(model, trace, static_cast<int>(pos), target);
      c.expect(records.size() == static_cast<std::size_t>(model.config.n_layers), "one record per layer");
      for (const auto& rec : records) {
        const auto l = lens_logits(model, trace.at({rec.layer, HookSite::resid_post}).row(pos));
        std::vector<int> order(l.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return l[a] != l[b] ? l[a] > l[b] : a < b; });
        const int rank = static_cast<int>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
        c.expect(rec.rank == rank, "rank " + std::to_string(rec.rank) + " vs sort " + std::to_string(rank));
        c.expect(rec.logit == l[target], "lens logit differs");
        ++ranks;
      }
    }
  }
  c.expect(worst <= 1e-5f, "max abs difference " + fmt(worst));
  return c.outcome(std::to_string(positions) + " positions, max |lens - logits| " + fmt(worst) + ", " +
                   std::to_string(ranks) + " ranks checked");
}

// 8. Hand-counted stylometrics.
Outcome ac8() {
  Checker c;
  const auto r = stylometrics("I sat; I read, and I wrote.");
  c.expect(r.word_count == 7, "word count " + std::to_string(r.word_count));
  c.expect(r.avg_word_length == 18.0 / 7.0, "avg word length " + fmt(r.avg_word_length, 17));
  c.expect(r.short_word_prop == 6.0 / 7.0, "short-word proportion " + fmt(r.short_word_prop, 17));
  c.expect(r.sentence_count == 1, "sentence count " + std::to_string(r.sentence_count));
  c.expect(r.avg_sentence_length == 7.0, "avg sentence length");
  c.expect(r.comma_density == 100.0 / 7.0, "comma density " + fmt(r.comma_density, 17));
  c.expect(r.semicolon_density == 100.0 / 7.0, "semicolon density " + fmt(r.semicolon_density, 17));
  c.expect(r.long_word_prop == 0.0, "long-word proportion");
  return c.outcome("7 words, 18/7 letters per word, 6/7 short, 1 sentence, 100/7 commas and semicolons");
}

// 9. Degradation and percent-change arithmetic on known reference values.
Outcome ac9() {
  Checker c;
  const double d = degradation(0.793, 0.997);
  c.expect(std::abs(d - (-25.7)) <= 0.05, "degradation " + fmt(d, 6));
  struct Row {
    const char* metric;
    double baseline, additive, multiplicative, change_low, change_high;
  };
  const Row rows[] = {
      {"avg word length", 5.24, 4.71, 4.62, -10.1, -11.8},   {"short words", 38.2, 44.7, 46.1, 17.0, 20.7},
      {"long words", 18.9, 14.2, 13.1, -24.9, -30.7},        {"avg sentence length", 18.4, 20.7, 21.8, 12.5, 18.5},
      {"comma density", 3.8, 4.9, 5.2, 28.9, 36.8},          {"semicolon density", 0.42, 0.58, 0.67, 38.1, 59.5},
  };
  double worst = 0.0;
  for (const auto& r : rows) {
    const double a = percent_change(r.baseline, r.additive);
    const double m = percent_change(r.baseline, r.multiplicative);
    worst = std::max({worst, std::abs(a - r.change_low), std::abs(m - r.change_high)});
    c.expect(std::abs(a - r.change_low) <= 0.1, std::string(r.metric) + " additive " + fmt(a, 5));
    c.expect(std::abs(m - r.change_high) <= 0.1, std::string(r.metric) + " multiplicative " + fmt(m, 5));
  }
  return c.outcome("0.793 -> 0.997 gives " + fmt(d, 4) + "%, 12 table changes within " + fmt(worst, 2) + " points");
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir);
    out[rel.string()] = sha256_file(e.path());
  }
  return out;
}

// 10. Full CLI run on the tiny model: complete, fast and reproducible.
Outcome ac10() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker c;
  TempDir dir("ac10");
  const std::string cli = STYLESCOPE_CLI;
  const fs::path ckpt = dir / "tiny.ckpt";
  const fs::path config = test_support::data_file("tiny.toml");
  c.expect(run_command(cli + " init-tiny " + ckpt.string() + " 2>/dev/null") == 0, "init-tiny failed");
  auto run = [&](const fs::path& out) {
    return run_command(cli + " run -c " + config.string() + " --checkpoint " + ckpt.string() + " -o " +
                       out.string() + " 2>" + (dir / "stderr.txt").string());
  };
  const int first = run(dir / "a");
  c.expect(first == 0, "first run exited " + std::to_string(first) + ": " + test_support::read_file(dir / "stderr.txt"));
  const double first_secs = seconds_since(t0);
  c.expect(first_secs < 300.0, "first run took " + fmt(first_secs) + " s");

  const auto cfg = load_experiment_config(config, {"output.dir=\"" + (dir / "a").string() + "\""});
  std::size_t present = 0;
  const auto artifacts = expected_artifacts(cfg);
  for (const auto& f : artifacts) {
    const bool ok = fs::exists(dir / "a" / f) && fs::file_size(dir / "a" / f) > 0;
    present += ok;
    c.expect(ok, "missing " + f);
  }
  const auto first_hashes = tree_hashes(dir / "a");

  c.expect(run(dir / "a") == 0, "rerun failed");
  c.expect(tree_hashes(dir / "a") == first_hashes, "rerun in place changed outputs");
  const std::string log = test_support::read_file(dir / "stderr.txt");
  c.expect(log.find("9 stages ok (9 cached)") != std::string::npos, "rerun did not hit the cache for every stage");

  // a second run from scratch with the same configuration
  fs::rename(dir / "a", dir / "first");
  c.expect(run(dir / "a") == 0, "fresh second run failed");
  c.expect(tree_hashes(dir / "a") == first_hashes, "fresh run is not byte-identical");
  const double secs = seconds_since(t0);
  return c.outcome(std::to_string(present) + "/" + std::to_string(artifacts.size()) + " artifacts, first run " +
                   fmt(first_secs) + " s, rerun cached and byte-identical, fresh run byte-identical");
}

// 11. Nucleus membership and the p = 1 distribution.
Outcome ac11() {
  Checker c;
  std::mt19937_64 gen(1111);
  Rng rng(11);
  std::size_t inside = 0;
  for (int step = 0; step < 10000; ++step) {
    std::normal_distribution<float> d(0.0f, std::uniform_real_distribution<float>(0.5f, 6.0f)(gen));
    std::vector<float> logits(std::uniform_int_distribution<int>(2, 400)(gen));
    for (auto& x : logits) x = d(gen);
    const double p = std::uniform_real_distribution<double>(0.01, 1.0)(gen);
    const double temp = std::uniform_real_distribution<double>(0.2, 2.0)(gen);
    const auto n = nucleus(logits, temp, p);
    const auto id = sample_token(logits, temp, p, rng);
    const bool ok = std::find(n.ids.begin(), n.ids.end(), id) != n.ids.end();
    inside += ok;
    c.expect(ok, "sample outside the nucleus at step " + std::to_string(step));
  }
  const std::vector<float> five = {2.0f, 1.0f, 0.5f, -1.0f, 0.0f};
  const auto probs = softmax(five, 1.0);
  std::vector<double> counts(5, 0.0);
  Rng draw(12);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[sample_token(five, 1.0, 1.0, draw)] += 1.0;
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) worst = std::max(worst, std::abs(counts[k] / draws - probs[k]));
  c.expect(worst <= 0.01, "empirical deviation " + fmt(worst));
  return c.outcome(std::to_string(inside) + "/10000 samples inside the nucleus, p=1 max deviation " + fmt(worst, 2));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"AC1 tokenizer oracle", ac1},         {"AC2 forward-pass oracle", ac2},
      {"AC3 statistics oracle", ac3},        {"AC4 discrimination recovery", ac4},
      {"AC5 intervention identities", ac5},  {"AC6 ablation effect", ac6},
      {"AC7 logit-lens identity", ac7},      {"AC8 stylometrics exactness", ac8},
      {"AC9 degradation arithmetic", ac9},   {"AC10 end-to-end desk run", ac10},
      {"AC11 nucleus sampler", ac11},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
