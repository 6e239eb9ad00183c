#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace stylescope {

struct StyleReport {
  double avg_word_length = 0.0;      // letters per word
  double short_word_prop = 0.0;      // words of <= 4 letters
  double long_word_prop = 0.0;       // words of >= 8 letters
  double avg_sentence_length = 0.0;  // words per sentence
  double comma_density = 0.0;        // per 100 words
  double semicolon_density = 0.0;    // per 100 words
  std::optional<double> composite_score;
  std::size_t word_count = 0;
  std::size_t sentence_count = 0;
};

// Words are maximal runs of letters and apostrophes (' or U+2019) holding at
// least one letter; length counts letters only. A sentence ends at a run of
// . ! ? followed by whitespace or end of text; a trailing unterminated
// stretch with words counts as one more. Throws EmptyText when no word is
// found, InvalidUtf8 on bad input.
StyleReport stylometrics(std::string_view text);

// The composite's definition, recorded in every report that carries it.
extern const char* const kCompositeDefinition;

// Mean over short_word_prop, avg_sentence_length and comma_density of
// min(value / reference, 1). Throws ZeroReference.
double composite_style_score(const StyleReport& report, const StyleReport& reference);

// (baseline - condition) / baseline * 100; positive means the style got
// weaker. Throws ZeroBaseline.
double degradation(double baseline_score, double condition_score);

// (after - before) / before * 100. Throws ZeroBaseline.
double percent_change(double before, double after);

// Metric names in report order, and accessor by name.
const std::vector<std::string>& style_metric_names();
double style_metric(const StyleReport& r, const std::string& name);

struct MetricComparison {
  std::string metric;
  double baseline_mean = 0.0;
  double baseline_sd = 0.0;
  double condition_mean = 0.0;
  double condition_sd = 0.0;
  double change_pct = 0.0;  // NaN when the baseline mean is 0
  std::optional<double> t_stat;
  std::optional<double> p_value;  // absent with fewer than 2 pairs
  std::string note;
};

struct MethodComparison {
  std::string method;
  std::size_t pairs = 0;
  std::vector<MetricComparison> metrics;
};

struct ComparisonTable {
  std::vector<MethodComparison> methods;
  bool has_composite = false;
};

// Per-metric mean +- sd across texts, percent change of the means, and a
// paired t over (condition_i, baseline_i). Condition texts pair with
// baseline texts by index. With a reference, the composite score joins the
// metrics.
ComparisonTable compare_table(const std::vector<std::string>& baseline,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& conditions,
                              const std::optional<StyleReport>& reference = std::nullopt);

nlohmann::json to_json(const StyleReport& r);
nlohmann::json to_json(const ComparisonTable& t);
void write_style_csv_header(std::ostream& out);
void write_style_csv_row(std::ostream& out, const std::string& label, const StyleReport& r);
void write_comparison_csv(std::ostream& out, const ComparisonTable& t);
void write_comparison_markdown(std::ostream& out, const ComparisonTable& t);

}  // namespace stylescope
