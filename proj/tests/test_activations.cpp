#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "stylescope/activations.hpp"
#include "stylescope/error.hpp"
#include "support.hpp"

using namespace stylescope;

namespace {

std::vector<CorpusChunk> small_chunks() {
  const auto& tok = test_support::gpt2_tokenizer();
  auto a = chunk_corpus("I would prefer not to. He sat in the window; quiet, pallid, alone.", CorpusLabel::original,
                        tok, 8, 2);
  auto b = chunk_corpus("The dog ran. The car went fast. The man got a cup.", CorpusLabel::comparison, tok, 8, 2);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("chunk rows are position means of mlp_post_act") {
  const auto m = test_support::tiny_model();
  const auto chunks = small_chunks();
  const auto set = extract_activations(m, chunks, {0, 1}, 0.1f);
  REQUIRE(set.size() == 4);
  const auto& orig1 = set.at({1, CorpusLabel::original});
  std::size_t n_orig = 0;
  for (const auto& c : chunks) n_orig += c.label == CorpusLabel::original ? 1 : 0;
  CHECK(orig1.values.rows == n_orig);
  CHECK(orig1.values.cols == 128);

  std::uint64_t tokens = 0;
  std::vector<std::uint64_t> above(128, 0);
  std::vector<float> mx(128, -1e30f);
  std::size_t row = 0;
  for (const auto& c : chunks) {
    if (c.label != CorpusLabel::original) continue;
    const auto t = forward(m, c.tokens, {HookPoint{1, HookSite::mlp_post_act}});
    const auto& a = t.at({1, HookSite::mlp_post_act});
    for (std::size_t n = 0; n < 128; ++n) {
      double s = 0;
      for (std::size_t r = 0; r < a.rows; ++r) {
        s += a(r, n);
        above[n] += a(r, n) > 0.1f ? 1 : 0;
        mx[n] = std::max(mx[n], a(r, n));
      }
      CHECK(orig1.values(row, n) == doctest::Approx(s / a.rows).epsilon(1e-6));
    }
    tokens += a.rows;
    ++row;
  }
  CHECK(orig1.tokens.token_count == tokens);
  CHECK(orig1.tokens.above == above);
  CHECK(orig1.tokens.max == mx);
}

TEST_CASE("matrix files round trip with their sidecar") {
  test_support::TempDir dir("act");
  const auto m = test_support::tiny_model();
  const auto set = extract_activations(m, small_chunks(), {0});
  const auto& a = set.at({0, CorpusLabel::comparison});
  const auto path = dir / activation_file_name(0, CorpusLabel::comparison);
  CHECK(path.filename() == "L0_comparison.bin");
  save_activation_matrix(path, a, "abc123");
  CHECK(std::filesystem::exists(path.string() + ".json"));
  CHECK(load_activation_matrix(path) == a);
  CHECK(read_matrix_file(path) == a.values);
  const auto sidecar = nlohmann::json::parse(test_support::read_file(path.string() + ".json"));
  CHECK(sidecar.at("chunk_manifest_hash") == "abc123");
  CHECK(sidecar.at("rows") == a.values.rows);

  std::ofstream(dir / "junk.bin") << "SSACTMA";
  CHECK_THROWS_AS(read_matrix_file(dir / "junk.bin"), IoError);
  CHECK_THROWS_AS(read_matrix_file(dir / "missing.bin"), IoError);
}

TEST_CASE("token stream visits chunk, position, neuron in order") {
  const auto m = test_support::tiny_model();
  const auto chunks = small_chunks();
  auto stream = stream_token_activations(m, chunks, 1, {7, 2});
  std::size_t count = 0, expected = 0;
  for (const auto& c : chunks) expected += c.tokens.size() * 2;
  std::optional<TokenActivationRecord> prev;
  const auto t0 = forward(m, chunks[0].tokens, {HookPoint{1, HookSite::mlp_post_act}});
  while (auto r = stream.next()) {
    if (count < 2 * chunks[0].tokens.size()) {
      CHECK(r->chunk_index == 0);
      CHECK(r->value == t0.at({1, HookSite::mlp_post_act})(r->position, r->neuron));
      CHECK(r->neuron == (count % 2 == 0 ? 7 : 2));
    }
    if (prev && prev->chunk_index == r->chunk_index) CHECK(prev->position <= r->position);
    prev = r;
    ++count;
  }
  CHECK(count == expected);
  auto empty = stream_token_activations(m, chunks, 1, {});
  CHECK_FALSE(empty.next().has_value());
}

TEST_CASE("default layers are the late half of a 24-layer model") {
  CHECK(default_extraction_layers() == std::vector<int>{16, 17, 18, 19, 20, 21, 22, 23});
}
