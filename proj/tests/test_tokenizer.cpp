#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <set>

#include "stylescope/error.hpp"
#include "stylescope/tokenizer.hpp"
#include "support.hpp"

using namespace stylescope;
using test_support::gpt2_tokenizer;

TEST_CASE("byte proxy mapping is a bijection over all 256 bytes") {
  std::set<std::string> seen;
  for (int b = 0; b < 256; ++b) {
    const std::string& s = byte_to_unicode(static_cast<std::uint8_t>(b));
    CHECK(seen.insert(s).second);
  }
  CHECK(byte_to_unicode('A') == "A");
  CHECK(byte_to_unicode(' ') == "\xC4\xA0");  // U+0120
  CHECK(unicode_to_byte(0x120) == std::optional<std::uint8_t>(' '));
  CHECK_FALSE(unicode_to_byte(0x3000).has_value());
}

TEST_CASE("vocab loads the GPT-2 tables") {
  const auto& v = gpt2_tokenizer().vocab();
  CHECK(v.size() == 50257);
  CHECK(v.merge_count() == 50000);
  CHECK(v.find("<|endoftext|>") == std::optional<TokenId>(kEndOfText));
  CHECK(v.merge_rank("\xC4\xA0", "t") == 0);
  CHECK(v.merge_rank("zz", "qq") == -1);
}

TEST_CASE("pre-tokenizer splits like the GPT-2 pattern") {
  using V = std::vector<std::string_view>;
  CHECK(Tokenizer::pre_tokenize("Hello world") == V{"Hello", " world"});
  CHECK(Tokenizer::pre_tokenize("I'm here's") == V{"I", "'m", " here", "'s"});
  CHECK(Tokenizer::pre_tokenize("a  b") == V{"a", " ", " b"});
  CHECK(Tokenizer::pre_tokenize("x 123!!") == V{"x", " 123", "!!"});
  CHECK(Tokenizer::pre_tokenize("end   ") == V{"end", "   "});
  CHECK(Tokenizer::pre_tokenize("").empty());
}

TEST_CASE("fixture strings match the reference ids") {
  const auto doc = nlohmann::json::parse(test_support::read_file(test_support::fixture("tokenizer_fixture.json")));
  const auto& tok = gpt2_tokenizer();
  REQUIRE(doc.at("cases").size() >= 50);
  for (const auto& c : doc.at("cases")) {
    const std::string text = c.at("text");
    CAPTURE(text);
    CHECK(tok.encode(text) == c.at("ids").get<TokenSequence>());
  }
}

TEST_CASE("random UTF-8 round trips byte-exactly") {
  std::mt19937_64 rng(5);
  const auto& tok = gpt2_tokenizer();
  for (int i = 0; i < 300; ++i) {
    const std::string s = test_support::random_utf8(rng, 40);
    CHECK(tok.decode(tok.encode(s)) == s);
  }
}

TEST_CASE("byte offsets point at each token's first byte") {
  const auto& tok = gpt2_tokenizer();
  const std::string text = "I would prefer not to. Caf\xC3\xA9 au lait";
  std::vector<std::size_t> offsets;
  const auto ids = tok.encode(text, &offsets);
  REQUIRE(offsets.size() == ids.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CHECK(offsets[i] == pos);
    pos += tok.vocab().token_bytes(ids[i]).size();
  }
  CHECK(pos == text.size());
}

TEST_CASE("errors") {
  const auto& tok = gpt2_tokenizer();
  CHECK_THROWS_AS(tok.encode("bad \xFF byte"), InvalidUtf8);
  CHECK_THROWS_AS(tok.encode("\xC3"), InvalidUtf8);
  const TokenSequence bad = {50257};
  CHECK_THROWS_AS(tok.decode(bad), UnknownTokenId);
  const TokenSequence neg = {-1};
  CHECK_THROWS_AS(tok.decode(neg), UnknownTokenId);
  CHECK_THROWS_AS(Tokenizer::load("/nonexistent/vocab.json", test_support::merges_path()), Error);
}

TEST_CASE("to_valid_utf8 replaces cut sequences") {
  CHECK(to_valid_utf8("abc") == "abc");
  CHECK(to_valid_utf8("a\xC3") == "a\xEF\xBF\xBD");
  CHECK(to_valid_utf8("\xFF" "b") == "\xEF\xBF\xBD" "b");
  CHECK_NOTHROW(validate_utf8(to_valid_utf8("\xE2\x82")));
}

TEST_CASE("small hand-built vocab merges by rank") {
  std::unordered_map<std::string, TokenId> ids = {{"a", 0}, {"b", 1}, {"c", 2}, {"ab", 3}, {"bc", 4}, {"abc", 5}};
  // "bc" outranks "ab", so "abc" becomes a + bc; there is no (a, bc) rule.
  Tokenizer tok(Vocab::from_parts(ids, {{"b", "c"}, {"a", "b"}}));
  CHECK(tok.encode("abc") == TokenSequence{0, 4});
  CHECK(tok.encode("abab") == TokenSequence{3, 3});
  Tokenizer tok2(Vocab::from_parts(ids, {{"a", "b"}, {"ab", "c"}}));
  CHECK(tok2.encode("abc") == TokenSequence{5});
}
