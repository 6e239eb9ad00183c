#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stylescope/error.hpp"
#include "stylescope/styleval.hpp"
#include "support.hpp"

using namespace stylescope;

TEST_CASE("hand-counted sentence") {
  const auto r = stylometrics("I sat; I read, and I wrote.");
  CHECK(r.word_count == 7);
  CHECK(r.sentence_count == 1);
  CHECK(r.avg_word_length == 18.0 / 7.0);
  CHECK(r.short_word_prop == 6.0 / 7.0);
  CHECK(r.long_word_prop == 0.0);
  CHECK(r.avg_sentence_length == 7.0);
  CHECK(r.comma_density == 100.0 / 7.0);
  CHECK(r.semicolon_density == 100.0 / 7.0);
  CHECK_FALSE(r.composite_score.has_value());
}

TEST_CASE("word and sentence rules") {
  SUBCASE("apostrophes stay inside words and do not count as letters") {
    const auto r = stylometrics("Don\xE2\x80\x99t stop, o'er 'tis.");
    CHECK(r.word_count == 4);
    CHECK(r.avg_word_length == (4 + 4 + 3 + 3) / 4.0);
  }
  SUBCASE("digits are not words; a period inside a number is no boundary") {
    const auto r = stylometrics("Buy 3.5 apples. Now!");
    CHECK(r.word_count == 3);
    CHECK(r.sentence_count == 2);
  }
  SUBCASE("runs of terminators and a trailing unterminated stretch") {
    const auto r = stylometrics("What?! Really... yes and no");
    CHECK(r.sentence_count == 3);
    CHECK(r.avg_sentence_length == 5.0 / 3.0);
  }
  SUBCASE("terminators with no words between them are not sentences") {
    const auto r = stylometrics("Hi. . . ! there.");
    CHECK(r.sentence_count == 2);
  }
  SUBCASE("long words and non-ASCII letters") {
    const auto r = stylometrics("Extraordinary caf\xC3\xA9 na\xC3\xAFvet\xC3\xA9.");
    CHECK(r.word_count == 3);
    CHECK(r.long_word_prop == 1.0 / 3.0);
    CHECK(r.avg_word_length == (13 + 4 + 7) / 3.0);
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(stylometrics(""), EmptyText);
  CHECK_THROWS_AS(stylometrics("123 ... !!"), EmptyText);
  CHECK_THROWS_AS(stylometrics("bad \xFF"), InvalidUtf8);
  StyleReport zero;
  CHECK_THROWS_AS(composite_style_score(zero, zero), ZeroReference);
  CHECK_THROWS_AS(degradation(0.0, 1.0), ZeroBaseline);
  CHECK_THROWS_AS(percent_change(0.0, 1.0), ZeroBaseline);
}

TEST_CASE("composite score") {
  const auto ref = stylometrics("I sat; I read, and I wrote, as I always did, alone.");
  CHECK(composite_style_score(ref, ref) == 1.0);
  const auto plain = stylometrics("The dog ran. The cat sat.");
  const double expected =
      (std::min(plain.short_word_prop / ref.short_word_prop, 1.0) +
       std::min(plain.avg_sentence_length / ref.avg_sentence_length, 1.0) + 0.0) / 3.0;
  CHECK(composite_style_score(plain, ref) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(std::string(kCompositeDefinition).find("comma_density") != std::string::npos);
}

TEST_CASE("degradation and percent change arithmetic") {
  CHECK(degradation(0.793, 0.997) == doctest::Approx(-25.7251).epsilon(1e-5));
  CHECK(degradation(2.0, 1.0) == 50.0);
  CHECK(percent_change(5.24, 4.71) == doctest::Approx(-10.1145).epsilon(1e-5));
}

TEST_CASE("metric access by name") {
  const auto r = stylometrics("I sat; I read, and I wrote.");
  CHECK(style_metric_names().size() == 6);
  CHECK(style_metric(r, "comma_density") == r.comma_density);
  CHECK_THROWS(style_metric(r, "composite_score"));
  CHECK_THROWS(style_metric(r, "unknown"));
}

TEST_CASE("comparison table pairs texts by index") {
  const std::vector<std::string> base = {"I sat, alone.", "It rained, and I read.", "We left; nobody stayed."};
  const std::vector<std::string> cond = {"I sat.", "It rained.", "We left."};
  const auto ref = stylometrics("I sat; I read, and I wrote.");
  const auto table = compare_table(base, {{"plain", cond}, {"same", base}}, ref);
  CHECK(table.has_composite);
  REQUIRE(table.methods.size() == 2);
  CHECK(table.methods[0].pairs == 3);
  const auto& comma = table.methods[0].metrics[4];
  CHECK(comma.metric == "comma_density");
  CHECK(comma.condition_mean == 0.0);
  CHECK(comma.change_pct == -100.0);
  REQUIRE(comma.p_value.has_value());
  const auto& same = table.methods[1].metrics[0];
  CHECK(same.change_pct == 0.0);
  CHECK(*same.p_value == 1.0);
  CHECK(table.methods[0].metrics.back().metric == "composite_score");

  const auto short_table = compare_table({"One."}, {{"x", {"Two."}}});
  CHECK_FALSE(short_table.methods[0].metrics[0].p_value.has_value());
  CHECK_FALSE(short_table.methods[0].metrics[0].note.empty());

  std::ostringstream md, csv;
  write_comparison_markdown(md, table);
  write_comparison_csv(csv, table);
  CHECK(md.str().find("±") != std::string::npos);
  CHECK(csv.str().find("plain") != std::string::npos);
  CHECK(to_json(table).at("methods").size() == 2);
}
