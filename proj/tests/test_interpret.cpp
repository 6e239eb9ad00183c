#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <tuple>

#include "stylescope/interpret.hpp"
#include "support.hpp"

using namespace stylescope;

namespace {

std::vector<CorpusChunk> corpus_chunks() {
  const auto& tok = test_support::gpt2_tokenizer();
  const std::string text = test_support::read_file(test_support::data_file("original.txt")).substr(0, 1500);
  auto chunks = chunk_corpus(text, CorpusLabel::original, tok, 32, 8);
  auto other = chunk_corpus("The dog ran to the shop.", CorpusLabel::comparison, tok, 32, 8);
  chunks.insert(chunks.end(), other.begin(), other.end());
  return chunks;
}

}  // namespace

TEST_CASE("top contexts agree with a brute-force scan") {
  const auto m = test_support::tiny_model();
  const auto& tok = test_support::gpt2_tokenizer();
  const auto chunks = corpus_chunks();
  const int layer = 1;
  for (int neuron : {0, 17, 64}) {
    // (value desc, chunk asc, position asc) over original chunks only
    std::vector<std::tuple<float, int, int>> all;
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
      if (chunks[ci].label != CorpusLabel::original) continue;
      const auto t = forward(m, chunks[ci].tokens, {HookPoint{layer, HookSite::mlp_post_act}});
      const auto& a = t.at({layer, HookSite::mlp_post_act});
      for (std::size_t p = 0; p < a.rows; ++p) all.emplace_back(a(p, neuron), chunks[ci].index, static_cast<int>(p));
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
      if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
      return std::make_pair(std::get<1>(x), std::get<2>(x)) < std::make_pair(std::get<1>(y), std::get<2>(y));
    });
    const auto got = max_activating_contexts(m, chunks, tok, layer, neuron, 5, 10);
    REQUIRE(got.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(got[i].activation == std::get<0>(all[i]));
      CHECK(got[i].chunk_index == std::get<1>(all[i]));
      CHECK(got[i].position == std::get<2>(all[i]));
      const auto& c = chunks[got[i].chunk_index];
      CHECK(got[i].center_token == c.tokens[got[i].position]);
      CHECK(got[i].context_begin == std::max(0, got[i].position - 5));
      CHECK(got[i].context_end == std::min<int>(static_cast<int>(c.tokens.size()), got[i].position + 5));
      CHECK(got[i].context_begin <= got[i].position);
      CHECK(got[i].position < got[i].context_end);
      const std::string joined = got[i].before + got[i].center_text + got[i].after;
      CHECK(joined == to_valid_utf8(tok.decode(std::span(c.tokens).subspan(
                          got[i].context_begin, got[i].context_end - got[i].context_begin))));
    }
  }
}

TEST_CASE("multi-neuron pass equals single-neuron passes") {
  const auto m = test_support::tiny_model();
  const auto& tok = test_support::gpt2_tokenizer();
  const auto chunks = corpus_chunks();
  const auto multi = max_activating_contexts(m, chunks, tok, 0, std::vector<int>{3, 9}, 4, 6);
  for (int n : {3, 9}) {
    const auto single = max_activating_contexts(m, chunks, tok, 0, n, 4, 6);
    REQUIRE(multi.at(n).size() == single.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
      CHECK(multi.at(n)[i].activation == single[i].activation);
      CHECK(multi.at(n)[i].position == single[i].position);
    }
  }
  std::ostringstream md;
  write_contexts_markdown(md, {multi.at(3)});
  CHECK(md.str().find("**[") != std::string::npos);
  CHECK(to_json(multi.at(9)[0]).at("neuron") == 9);
}

TEST_CASE("lens report ranks agree with a full sort") {
  const auto m = test_support::tiny_model();
  const auto& tok = test_support::gpt2_tokenizer();
  const std::string prompt = "I would prefer not to";
  const auto ids = tok.encode(prompt);
  const auto target = tok.encode(" of")[0];
  const auto rep = lens_report(m, tok, prompt, -1, target);
  CHECK(rep.position == static_cast<int>(ids.size()) - 1);
  REQUIRE(rep.rows.size() == 2);
  const auto trace = forward(m, ids, all_resid_post(m.config));
  for (const auto& row : rep.rows) {
    const auto logits = lens_logits(m, trace.at({row.layer, HookSite::resid_post}).row(rep.position));
    std::vector<int> order(logits.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return logits[a] != logits[b] ? logits[a] > logits[b] : a < b; });
    const int rank = static_cast<int>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
    CHECK(row.target_rank == rank);
    CHECK(row.top_token == order[0]);
    CHECK(row.target_logit == logits[target]);
  }
  for (std::size_t v = 0; v < 50257; v += 997) CHECK(std::abs(trace.logits(rep.position, v) -
      lens_logits(m, trace.at({1, HookSite::resid_post}).row(rep.position))[v]) <= 1e-5f);
  std::ostringstream csv;
  write_lens_csv(csv, {rep});
  CHECK(csv.str().find("target_rank") != std::string::npos);
  CHECK(to_json(rep, tok).at("layers").size() == 2);
  CHECK_THROWS(lens_report(m, tok, prompt, 50, target));
}
