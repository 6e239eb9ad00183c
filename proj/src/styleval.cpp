#include "stylescope/styleval.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "stylescope/error.hpp"
#include "stylescope/stats.hpp"

namespace stylescope {

const char* const kCompositeDefinition =
    "mean of min(metric / reference_metric, 1) over short_word_prop, avg_sentence_length, comma_density; "
    "reference = stylometrics of the original corpus";

namespace {

bool is_apostrophe(UChar32 c) { return c == '\'' || c == 0x2019; }
bool is_terminator(UChar32 c) { return c == '.' || c == '!' || c == '?'; }

double sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(sample_variance(xs));
}

}  // namespace

StyleReport stylometrics(std::string_view text) {
  std::vector<UChar32> cps;
  {
    const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t i = 0;
    while (i < length) {
      const std::int32_t start = i;
      UChar32 c = 0;
      U8_NEXT(s, i, length, c);
      if (c < 0) throw InvalidUtf8("invalid UTF-8 sequence at byte " + std::to_string(start));
      cps.push_back(c);
    }
  }

  std::size_t words = 0, letters = 0, short_words = 0, long_words = 0;
  std::size_t commas = 0, semicolons = 0, sentences = 0;
  std::size_t words_in_sentence = 0;

  std::size_t i = 0;
  while (i < cps.size()) {
    const UChar32 c = cps[i];
    if (u_isalpha(c) || is_apostrophe(c)) {
      std::size_t run_letters = 0;
      while (i < cps.size() && (u_isalpha(cps[i]) || is_apostrophe(cps[i]))) {
        run_letters += u_isalpha(cps[i]) ? 1 : 0;
        ++i;
      }
      if (run_letters > 0) {
        ++words;
        ++words_in_sentence;
        letters += run_letters;
        short_words += run_letters <= 4 ? 1 : 0;
        long_words += run_letters >= 8 ? 1 : 0;
      }
      continue;
    }
    if (c == ',') ++commas;
    if (c == ';') ++semicolons;
    if (is_terminator(c)) {
      std::size_t j = i;
      while (j < cps.size() && is_terminator(cps[j])) ++j;
      if (j == cps.size() || u_isUWhiteSpace(cps[j])) {
        if (words_in_sentence > 0) ++sentences;
        words_in_sentence = 0;
      }
      i = j;
      continue;
    }
    ++i;
  }
  if (words_in_sentence > 0) ++sentences;
  if (words == 0) throw EmptyText("text contains no words");

  const double n = static_cast<double>(words);
  StyleReport r;
  r.word_count = words;
  r.sentence_count = sentences;
  r.avg_word_length = static_cast<double>(letters) / n;
  r.short_word_prop = static_cast<double>(short_words) / n;
  r.long_word_prop = static_cast<double>(long_words) / n;
  r.avg_sentence_length = n / static_cast<double>(sentences);
  r.comma_density = static_cast<double>(commas) * 100.0 / n;
  r.semicolon_density = static_cast<double>(semicolons) * 100.0 / n;
  return r;
}

double composite_style_score(const StyleReport& report, const StyleReport& reference) {
  const double refs[3] = {reference.short_word_prop, reference.avg_sentence_length, reference.comma_density};
  const double vals[3] = {report.short_word_prop, report.avg_sentence_length, report.comma_density};
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (refs[k] == 0.0) throw ZeroReference("reference metric is zero; composite undefined");
    sum += std::min(vals[k] / refs[k], 1.0);
  }
  return sum / 3.0;
}

double degradation(double baseline_score, double condition_score) {
  if (baseline_score == 0.0) throw ZeroBaseline("baseline style score is zero");
  return (baseline_score - condition_score) / baseline_score * 100.0;
}

double percent_change(double before, double after) {
  if (before == 0.0) throw ZeroBaseline("percent change from zero");
  return (after - before) / before * 100.0;
}

const std::vector<std::string>& style_metric_names() {
  static const std::vector<std::string> names = {"avg_word_length",     "short_word_prop", "long_word_prop",
                                                 "avg_sentence_length", "comma_density",   "semicolon_density"};
  return names;
}

double style_metric(const StyleReport& r, const std::string& name) {
  if (name == "avg_word_length") return r.avg_word_length;
  if (name == "short_word_prop") return r.short_word_prop;
  if (name == "long_word_prop") return r.long_word_prop;
  if (name == "avg_sentence_length") return r.avg_sentence_length;
  if (name == "comma_density") return r.comma_density;
  if (name == "semicolon_density") return r.semicolon_density;
  if (name == "composite_score") {
    if (!r.composite_score) throw ConfigError("report has no composite score");
    return *r.composite_score;
  }
  throw ConfigError("unknown style metric '" + name + "'");
}

ComparisonTable compare_table(const std::vector<std::string>& baseline,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& conditions,
                              const std::optional<StyleReport>& reference) {
  auto measure = [&reference](const std::vector<std::string>& texts) {
    std::vector<StyleReport> out;
    for (const auto& t : texts) {
      StyleReport r = stylometrics(t);
      if (reference) r.composite_score = composite_style_score(r, *reference);
      out.push_back(r);
    }
    return out;
  };
  if (baseline.empty()) throw EmptyText("no baseline texts");
  const auto base = measure(baseline);
  std::vector<std::string> metrics = style_metric_names();
  if (reference) metrics.push_back("composite_score");

  ComparisonTable table;
  table.has_composite = reference.has_value();
  for (const auto& [method, texts] : conditions) {
    const auto cond = measure(texts);
    MethodComparison mc;
    mc.method = method;
    mc.pairs = std::min(base.size(), cond.size());
    for (const auto& name : metrics) {
      std::vector<double> b, c;
      for (const auto& r : base) b.push_back(style_metric(r, name));
      for (const auto& r : cond) c.push_back(style_metric(r, name));
      MetricComparison m;
      m.metric = name;
      m.baseline_mean = mean(b);
      m.baseline_sd = sd(b);
      m.condition_mean = c.empty() ? std::numeric_limits<double>::quiet_NaN() : mean(c);
      m.condition_sd = sd(c);
      m.change_pct = m.baseline_mean == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                            : percent_change(m.baseline_mean, m.condition_mean);
      try {
        const std::vector<double> bp(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(mc.pairs));
        const std::vector<double> cp(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(mc.pairs));
        const TTest t = paired_t(cp, bp);
        m.t_stat = t.t;
        m.p_value = t.p;
      } catch (const InsufficientPairs& e) {
        m.note = e.what();
      }
      mc.metrics.push_back(std::move(m));
    }
    table.methods.push_back(std::move(mc));
  }
  return table;
}

nlohmann::json to_json(const StyleReport& r) {
  nlohmann::json j = {
      {"avg_word_length", r.avg_word_length},
      {"short_word_prop", r.short_word_prop},
      {"long_word_prop", r.long_word_prop},
      {"avg_sentence_length", r.avg_sentence_length},
      {"comma_density", r.comma_density},
      {"semicolon_density", r.semicolon_density},
      {"word_count", r.word_count},
      {"sentence_count", r.sentence_count},
  };
  if (r.composite_score) {
    j["composite_score"] = *r.composite_score;
    j["composite_definition"] = kCompositeDefinition;
  }
  return j;
}

namespace {

nlohmann::json optional_real(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return v ? nlohmann::json(format_real(*v)) : nlohmann::json(nullptr);
  return *v;
}

nlohmann::json real_or_string(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_real(v)); }

}  // namespace

nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : t.methods) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : m.metrics) {
      rows.push_back({{"metric", r.metric},
                      {"baseline_mean", real_or_string(r.baseline_mean)},
                      {"baseline_sd", real_or_string(r.baseline_sd)},
                      {"condition_mean", real_or_string(r.condition_mean)},
                      {"condition_sd", real_or_string(r.condition_sd)},
                      {"change_pct", real_or_string(r.change_pct)},
                      {"t_stat", optional_real(r.t_stat)},
                      {"p_value", optional_real(r.p_value)},
                      {"note", r.note}});
    }
    methods.push_back({{"method", m.method}, {"pairs", m.pairs}, {"metrics", rows}});
  }
  nlohmann::json j = {{"methods", methods}, {"test", "paired t (condition - baseline)"}};
  if (t.has_composite) j["composite_definition"] = kCompositeDefinition;
  return j;
}

void write_style_csv_header(std::ostream& out) {
  out << "label,word_count,sentence_count";
  for (const auto& n : style_metric_names()) out << ',' << n;
  out << ",composite_score\n";
}

void write_style_csv_row(std::ostream& out, const std::string& label, const StyleReport& r) {
  out << label << ',' << r.word_count << ',' << r.sentence_count;
  for (const auto& n : style_metric_names()) out << ',' << format_real(style_metric(r, n));
  out << ',' << (r.composite_score ? format_real(*r.composite_score) : "") << '\n';
}

void write_comparison_csv(std::ostream& out, const ComparisonTable& t) {
  out << "method,metric,pairs,baseline_mean,baseline_sd,condition_mean,condition_sd,change_pct,t_stat,p_value\n";
  for (const auto& m : t.methods) {
    for (const auto& r : m.metrics) {
      out << m.method << ',' << r.metric << ',' << m.pairs << ',' << format_real(r.baseline_mean) << ','
          << format_real(r.baseline_sd) << ',' << format_real(r.condition_mean) << ',' << format_real(r.condition_sd)
          << ',' << format_real(r.change_pct) << ',' << (r.t_stat ? format_real(*r.t_stat) : "") << ','
          << (r.p_value ? format_real(*r.p_value) : "") << '\n';
    }
  }
}

void write_comparison_markdown(std::ostream& out, const ComparisonTable& t) {
  auto pm = [](double m, double s) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", m, s);
    return std::string(buf);
  };
  for (const auto& m : t.methods) {
    out << "### " << m.method << " (" << m.pairs << " pairs)\n\n";
    out << "| metric | baseline | condition | change (%) | p |\n|---|---|---|---|---|\n";
    for (const auto& r : m.metrics) {
      char change[32];
      std::snprintf(change, sizeof change, "%+.1f", r.change_pct);
      out << "| " << r.metric << " | " << pm(r.baseline_mean, r.baseline_sd) << " | "
          << pm(r.condition_mean, r.condition_sd) << " | " << change << " | "
          << (r.p_value ? format_real(*r.p_value) : "n/a") << " |\n";
    }
    out << "\n";
  }
  if (t.has_composite) out << "Composite score: " << kCompositeDefinition << ".\n";
}

}  // namespace stylescope
