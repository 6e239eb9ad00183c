#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stylescope/corpus.hpp"
#include "stylescope/error.hpp"
#include "support.hpp"

using namespace stylescope;

TEST_CASE("window layout on small cases") {
  auto w = chunk_windows(10, 4, 1);  // stride 3: [0,4) [3,7) [6,10)
  REQUIRE(w.size() == 3);
  CHECK(w[2].begin == 6);
  CHECK(w[2].end == 10);
  w = chunk_windows(3, 4, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0].end == 3);
  w = chunk_windows(11, 4, 1);  // tail of 1 < stride/2: last window slides back
  REQUIRE(w.size() == 4);
  CHECK(w[3].begin == 7);
  CHECK(w[3].end == 11);
  w = chunk_windows(12, 4, 0);
  CHECK(w.size() == 3);
}

TEST_CASE("window properties hold over random shapes") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t chunk = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
    const std::size_t overlap = std::uniform_int_distribution<std::size_t>(0, chunk - 1)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 500)(rng);
    const auto w = chunk_windows(n, chunk, overlap);
    CAPTURE(chunk);
    CAPTURE(overlap);
    CAPTURE(n);
    REQUIRE_FALSE(w.empty());
    CHECK(w.front().begin == 0);
    CHECK(w.back().end == n);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i].end > w[i].begin);
      CHECK(w[i].end - w[i].begin <= chunk);
      if (i + 1 < w.size()) {
        CHECK(w[i + 1].begin <= w[i].end);  // full coverage
        CHECK(w[i + 1].begin > w[i].begin);
        if (i + 2 < w.size()) CHECK(w[i].end - w[i + 1].begin == overlap);
        else CHECK(w[i].end - w[i + 1].begin >= std::min(overlap, w[i].end - w[i].begin));
      }
    }
  }
}

TEST_CASE("invalid parameters") {
  CHECK_THROWS_AS(chunk_windows(10, 4, 4), InvalidOverlap);
  CHECK_THROWS_AS(chunk_windows(10, 4, 9), InvalidOverlap);
  CHECK_THROWS_AS(chunk_windows(0, 4, 1), EmptyCorpus);
  const auto& tok = test_support::gpt2_tokenizer();
  CHECK_THROWS_AS(chunk_corpus("", CorpusLabel::original, tok, 8, 2), EmptyCorpus);
  CHECK_THROWS_AS(chunk_corpus("text", CorpusLabel::original, tok, 8, 8), InvalidOverlap);
  CHECK_THROWS_AS(chunk_corpus("bad \xFF", CorpusLabel::original, tok, 8, 2), InvalidUtf8);
}

TEST_CASE("chunks carry their tokens and byte spans") {
  const auto& tok = test_support::gpt2_tokenizer();
  const std::string text = test_support::read_file(test_support::data_file("original.txt"));
  const auto all = tok.encode(text);
  const auto chunks = chunk_corpus(text, CorpusLabel::comparison, tok, 64, 16);
  REQUIRE(chunks.size() > 10);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    CHECK(c.label == CorpusLabel::comparison);
    CHECK(c.index == static_cast<int>(i));
    CHECK(c.tokens.size() <= 64);
    CHECK(std::equal(c.tokens.begin(), c.tokens.end(), all.begin() + static_cast<std::ptrdiff_t>(c.token_begin)));
    CHECK(tok.decode(c.tokens) == text.substr(c.byte_begin, c.byte_end - c.byte_begin));
  }
}

TEST_CASE("labels parse") {
  CHECK(parse_corpus_label("original") == CorpusLabel::original);
  CHECK(to_string(CorpusLabel::comparison) == "comparison");
  CHECK_THROWS(parse_corpus_label("other"));
}
