#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>
#include <sstream>

#include "stylescope/error.hpp"
#include "stylescope/intervene.hpp"
#include "stylescope/sampling.hpp"
#include "support.hpp"

using namespace stylescope;

namespace {

GenerationConfig short_config(std::uint64_t seed) {
  GenerationConfig c;
  c.max_new_tokens = 16;
  c.seed = seed;
  return c;
}

const TokenSequence& prompt() {
  static const TokenSequence p = test_support::gpt2_tokenizer().encode("I would prefer not to");
  return p;
}

std::vector<NeuronScore> fake_ranking() {
  // layer 1 neurons 0..29 with alternating sign, layer 0 neurons 100..109
  std::vector<NeuronScore> r;
  for (int i = 0; i < 30; ++i) r.push_back({.layer = 1, .neuron = i, .cohens_d = (i % 2 ? -1.0 : 1.0) * (40 - i)});
  for (int i = 0; i < 10; ++i) r.push_back({.layer = 0, .neuron = 100 + i, .cohens_d = 5.0 - i});
  return rank_neurons(r, RankKey::abs_cohens_d, 1000);
}

SuiteSettings settings() {
  SuiteSettings s;
  s.generation = short_config(0);
  s.prompts = {"I would prefer not to", "The scrivener sat"};
  s.seeds = {1, 2};
  s.reference = stylometrics("I sat; I read, and I wrote, as I always did, alone and quiet.");
  return s;
}

}  // namespace

TEST_CASE("generation is reproducible per seed") {
  const auto m = test_support::tiny_model();
  const auto a = generate(m, prompt(), short_config(5));
  const auto b = generate(m, prompt(), short_config(5));
  const auto c = generate(m, prompt(), short_config(6));
  CHECK(a.generated.size() == 16);
  CHECK(a.generated == b.generated);
  CHECK(a.generated != c.generated);
  CHECK(a.prompt == prompt());
  auto greedy = short_config(1);
  greedy.greedy = true;
  auto greedy2 = greedy;
  greedy2.seed = 77;
  CHECK(generate(m, prompt(), greedy).generated == generate(m, prompt(), greedy2).generated);
}

TEST_CASE("cached generation equals re-running the full prefix") {
  const auto m = test_support::tiny_model();
  auto cfg = short_config(3);
  cfg.greedy = true;
  const auto g = generate(m, prompt(), cfg);
  TokenSequence seq = prompt();
  for (TokenId next : g.generated) {
    const auto t = forward(m, seq);
    CHECK(argmax(t.logits.row(t.logits.rows - 1)) == next);
    seq.push_back(next);
  }
}

TEST_CASE("neutral interventions reproduce the baseline token for token") {
  const auto m = test_support::tiny_model();
  const auto base = generate(m, prompt(), short_config(9)).generated;
  const float ninf = -std::numeric_limits<float>::infinity();
  std::vector<float> v(128, 0.37f);
  for (const auto& spec : {InterventionSpec::add(1, v, 0.0f), InterventionSpec::scale(0, {1, 5, 9}, 1.0f),
                           InterventionSpec::clamp(1, {2, 4, 8}, ninf)}) {
    CHECK(generate(m, prompt(), short_config(9), {spec}).generated == base);
  }
  CHECK(generate(m, prompt(), short_config(9), {InterventionSpec::add(1, v, 30.0f)}).generated != base);
}

TEST_CASE("ablated columns are zero on every step") {
  const auto m = test_support::tiny_model();
  const std::vector<int> set = {4, 40, 127};
  StepObserver obs;
  obs.capture = {{1, HookSite::mlp_post_act}};
  int steps = 0;
  obs.on_step = [&](int, const ForwardTrace& t) {
    const auto& a = t.at({1, HookSite::mlp_post_act});
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (int n : set) CHECK(a(r, n) == 0.0f);
    }
    ++steps;
  };
  generate(m, prompt(), short_config(2), {InterventionSpec::ablate(1, set)}, &obs);
  CHECK(steps == 16);
}

TEST_CASE("prompt positions can be left untouched") {
  const auto m = test_support::tiny_model();
  auto cfg = short_config(2);
  cfg.intervene_prompt = false;
  StepObserver obs;
  obs.capture = {{0, HookSite::mlp_post_act}};
  obs.on_step = [&](int step, const ForwardTrace& t) {
    const auto& a = t.at({0, HookSite::mlp_post_act});
    if (step == 0) {
      CHECK(a.rows == prompt().size());
      bool any_nonzero = false;
      for (std::size_t r = 0; r < a.rows; ++r) any_nonzero |= a(r, 3) != 0.0f;
      CHECK(any_nonzero);
    } else {
      CHECK(a(0, 3) == 0.0f);
    }
  };
  generate(m, prompt(), cfg, {InterventionSpec::ablate(0, {3})}, &obs);
}

TEST_CASE("generation errors") {
  const auto m = test_support::tiny_model();
  CHECK_THROWS_AS(generate(m, {}, short_config(1)), EmptyText);
  CHECK_THROWS_AS(generate(m, {60000}, short_config(1)), UnknownTokenId);
  auto long_cfg = short_config(1);
  long_cfg.max_new_tokens = 200;
  CHECK_THROWS_AS(generate(m, prompt(), long_cfg), ContextOverflow);
  auto bad = short_config(1);
  bad.nucleus_p = 0.0;
  CHECK_THROWS_AS(generate(m, prompt(), bad), InvalidIntervention);
}

TEST_CASE("style vector is the difference of column means") {
  ActivationMatrix a, b;
  a.values = Matrix(2, 3);
  b.values = Matrix(1, 3);
  a.values.data = {1, 2, 3, 3, 4, 5};
  b.values.data = {1, 1, 1};
  CHECK(style_vector(a, b) == std::vector<float>{1, 2, 3});
  b.values = Matrix(1, 2);
  CHECK_THROWS_AS(style_vector(a, b), ShapeMismatch);
}

TEST_CASE("neuron selection from the ranking") {
  const auto r = fake_ranking();
  CHECK(top_neurons_in_layer(r, 1, 3) == std::vector<int>{0, 1, 2});
  CHECK(top_neurons_in_layer(r, 1, 3, true) == std::vector<int>{0, 2, 4});
  CHECK(top_neurons_in_layer(r, 0, 50).size() == 10);
  CHECK(top_neurons_in_layer(r, 5, 3).empty());
}

TEST_CASE("ablation plans") {
  const auto m = test_support::tiny_model();
  const auto& tok = test_support::gpt2_tokenizer();
  const auto s = settings();
  const auto base = run_baseline(m, tok, s);
  CHECK(base.samples.size() == 4);
  CHECK(base.error.empty());

  AblationPlan cumulative;
  cumulative.counts = {0, 1, 5};
  cumulative.cumulative_layer = 1;
  const auto c = run_ablation_suite(m, tok, fake_ranking(), s, cumulative, &base);
  REQUIRE(c.conditions.size() == 3);
  CHECK(c.conditions[0].name == "top0@L1");
  CHECK(c.conditions[0].degradation_pct == 0.0);
  CHECK(c.conditions[2].neurons == 5);

  AblationPlan single;
  single.kind = AblationPlan::Kind::single_top;
  single.single_count = 2;
  const auto st = run_ablation_suite(m, tok, fake_ranking(), s, single, &base);
  REQUIRE(st.conditions.size() == 2);
  CHECK(st.conditions[0].name == "L1N0");

  AblationPlan multi;
  multi.kind = AblationPlan::Kind::multi_layer;
  multi.layer_sets = {{1}, {0, 1}};
  multi.per_layer_k = 4;
  const auto ml = run_ablation_suite(m, tok, fake_ranking(), s, multi, &base);
  REQUIRE(ml.conditions.size() == 2);
  CHECK(ml.conditions[1].name == "L0-1");
  CHECK(ml.conditions[1].neurons == 8);

  std::ostringstream csv;
  write_suite_csv(csv, ml);
  CHECK(csv.str().find("L0-1") != std::string::npos);
  const auto j = to_json(ml);
  CHECK(j.at("conditions").size() == 2);
  CHECK(j.contains("composite_definition"));
  CHECK(parse_ablation_kind("multi_layer") == AblationPlan::Kind::multi_layer);
  CHECK_THROWS(parse_ablation_kind("everything"));
}

TEST_CASE("steering grid") {
  const auto m = test_support::tiny_model();
  const auto& tok = test_support::gpt2_tokenizer();
  std::map<int, std::vector<float>> vectors = {{1, std::vector<float>(128, 0.05f)}};
  SteeringGrid grid;
  grid.alphas = {0.0, 1.0};
  grid.betas = {1.0, 2.0};
  grid.gammas = {0.5};
  grid.top_k = 3;
  const auto r = run_steering_suite(m, tok, fake_ranking(), vectors, settings(), grid);
  REQUIRE(r.conditions.size() == 5);
  CHECK(r.conditions[0].name == "additive_a0");
  CHECK(r.conditions[0].degradation_pct == 0.0);
  CHECK(r.conditions[2].name == "multiplicative_b1");
  CHECK(r.conditions[2].degradation_pct == 0.0);
  CHECK(r.conditions[2].neurons == 3);
  CHECK(r.conditions[4].name == "clamp_g0.5");
  for (const auto& c : r.conditions) CHECK(c.samples.size() == 4);
  const auto table = suite_comparison(r, settings().reference);
  CHECK(table.methods.size() == 5);
  CHECK(table.has_composite);
}
