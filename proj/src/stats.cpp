#include "stylescope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>

#include <boost/math/special_functions/beta.hpp>

#include "stylescope/error.hpp"

namespace stylescope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_size(std::span<const double> xs, std::size_t n, const char* what) {
  if (xs.size() < n) {
    throw EmptySample(std::string(what) + " needs at least " + std::to_string(n) + " values, got " +
                      std::to_string(xs.size()));
  }
}

double signed_inf(double x) { return x > 0 ? kInf : (x < 0 ? -kInf : 0.0); }

}  // namespace

double mean(std::span<const double> xs) {
  require_size(xs, 1, "mean");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  require_size(xs, 2, "variance");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

double student_t_p_two_sided(double t, double df) {
  if (std::isnan(t) || !(df > 0)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2); for large |t| x is tiny and the
  // direct form keeps full relative precision in the tail.
  const double t2 = t * t;
  const double x = df / (df + t2);
  if (x < 0.5) return boost::math::ibeta(df / 2.0, 0.5, x);
  return boost::math::ibetac(0.5, df / 2.0, t2 / (df + t2));
}

double cohens_d(std::span<const double> xs, std::span<const double> ys) {
  require_size(xs, 2, "cohens_d");
  require_size(ys, 2, "cohens_d");
  const double n1 = static_cast<double>(xs.size()), n2 = static_cast<double>(ys.size());
  const double pooled = ((n1 - 1) * sample_variance(xs) + (n2 - 1) * sample_variance(ys)) / (n1 + n2 - 2);
  const double diff = mean(xs) - mean(ys);
  if (pooled == 0.0) {
    if (diff == 0.0) return 0.0;
    throw DegenerateVariance("pooled standard deviation is zero with differing means");
  }
  return diff / std::sqrt(pooled);
}

TTest welch_t(std::span<const double> xs, std::span<const double> ys) {
  require_size(xs, 2, "welch_t");
  require_size(ys, 2, "welch_t");
  const double n1 = static_cast<double>(xs.size()), n2 = static_cast<double>(ys.size());
  const double a = sample_variance(xs) / n1;
  const double b = sample_variance(ys) / n2;
  if (a == 0.0 && b == 0.0) throw DegenerateVariance("both samples have zero variance");
  TTest r;
  r.t = (mean(xs) - mean(ys)) / std::sqrt(a + b);
  r.df = (a + b) * (a + b) / (a * a / (n1 - 1) + b * b / (n2 - 1));
  r.p = student_t_p_two_sided(r.t, r.df);
  return r;
}

TTest paired_t(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeMismatch("paired samples differ in length");
  if (xs.size() < 2) throw InsufficientPairs("paired t needs at least 2 pairs");
  std::vector<double> d(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) d[i] = xs[i] - ys[i];
  const double n = static_cast<double>(d.size());
  const double m = mean(d);
  const double var = sample_variance(d);
  TTest r;
  r.df = n - 1;
  if (var == 0.0) {
    r.t = signed_inf(m);
    r.p = m == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = m / std::sqrt(var / n);
  r.p = student_t_p_two_sided(r.t, r.df);
  return r;
}

double activation_frequency(std::span<const double> values, double threshold) {
  if (values.empty()) throw EmptySample("activation_frequency on empty sample");
  std::size_t above = 0;
  for (double v : values) above += v > threshold ? 1 : 0;
  return static_cast<double>(above) / static_cast<double>(values.size());
}

double max_activation_diff(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || ys.empty()) throw EmptySample("max_activation_diff on empty sample");
  return std::fabs(*std::max_element(xs.begin(), xs.end()) - *std::max_element(ys.begin(), ys.end()));
}

double point_biserial(std::span<const double> values, std::span<const int> labels) {
  if (values.size() != labels.size()) throw ShapeMismatch("values and labels differ in length");
  if (values.empty()) throw EmptySample("point_biserial on empty sample");
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw SingleClass("labels must be 0 or 1");
    (l ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw SingleClass("point_biserial needs both label classes");
  const double n = static_cast<double>(values.size());
  double mv = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    mv += values[i];
    ml += labels[i];
  }
  mv /= n;
  ml /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double dx = values[i] - mv, dy = labels[i] - ml;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw ZeroVariance("values are constant");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

NeuronScore score_neuron(int layer, int neuron, std::span<const double> orig, std::span<const double> comparison,
                         const StatsOptions& options) {
  NeuronScore s;
  s.layer = layer;
  s.neuron = neuron;
  s.mean_orig = mean(orig);
  s.mean_comparison = mean(comparison);
  const double diff = s.mean_orig - s.mean_comparison;
  auto note = [&s](const std::string& what) {
    if (!s.diagnostic.empty()) s.diagnostic += "; ";
    s.diagnostic += what;
  };

  try {
    s.cohens_d = cohens_d(orig, comparison);
  } catch (const DegenerateVariance&) {
    s.cohens_d = signed_inf(diff);
    note("cohens_d: zero pooled variance");
  }
  try {
    const TTest t = welch_t(orig, comparison);
    s.t_stat = t.t;
    s.df = t.df;
    s.p_value = t.p;
  } catch (const DegenerateVariance&) {
    s.t_stat = signed_inf(diff);
    s.df = 0.0;
    s.p_value = diff == 0.0 ? 1.0 : 0.0;
    note("welch_t: both variances zero");
  }

  std::vector<double> values(orig.begin(), orig.end());
  values.insert(values.end(), comparison.begin(), comparison.end());
  std::vector<int> labels(orig.size(), 1);
  labels.resize(values.size(), 0);
  try {
    s.point_biserial = point_biserial(values, labels);
  } catch (const ZeroVariance&) {
    s.point_biserial = 0.0;
    note("point_biserial: constant values");
  }

  s.activation_frequency_orig = activation_frequency(orig, options.frequency_threshold);
  s.activation_frequency_comparison = activation_frequency(comparison, options.frequency_threshold);
  s.max_activation_diff = max_activation_diff(orig, comparison);
  s.significant_raw = s.p_value < options.raw_alpha;
  s.significant_bonferroni = options.bonferroni.significant(s.p_value);
  return s;
}

std::vector<NeuronScore> score_all(const ActivationSet& matrices, const StatsOptions& options) {
  std::map<int, std::pair<const ActivationMatrix*, const ActivationMatrix*>> layers;
  for (const auto& [key, m] : matrices) {
    auto& slot = layers[key.first];
    (key.second == CorpusLabel::original ? slot.first : slot.second) = &m;
  }
  std::vector<NeuronScore> out;
  for (const auto& [layer, pair] : layers) {
    const auto* orig = pair.first;
    const auto* comp = pair.second;
    if (!orig || !comp) {
      throw EmptySample("layer " + std::to_string(layer) + " lacks one of the two corpora");
    }
    if (orig->values.cols != comp->values.cols) {
      throw ShapeMismatch("layer " + std::to_string(layer) + ": neuron counts differ between corpora");
    }
    const bool token_level = orig->tokens.token_count > 0 && comp->tokens.token_count > 0 &&
                             orig->tokens.above.size() == orig->values.cols &&
                             comp->tokens.above.size() == comp->values.cols;
    for (std::size_t n = 0; n < orig->values.cols; ++n) {
      const auto xs = orig->values.column(n);
      const auto ys = comp->values.column(n);
      NeuronScore s = score_neuron(layer, static_cast<int>(n), xs, ys, options);
      if (token_level) {
        s.activation_frequency_orig =
            static_cast<double>(orig->tokens.above[n]) / static_cast<double>(orig->tokens.token_count);
        s.activation_frequency_comparison =
            static_cast<double>(comp->tokens.above[n]) / static_cast<double>(comp->tokens.token_count);
        s.max_activation_diff =
            std::fabs(static_cast<double>(orig->tokens.max[n]) - static_cast<double>(comp->tokens.max[n]));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

RankKey parse_rank_key(const std::string& name) {
  if (name == "abs_cohens_d" || name == "cohens_d") return RankKey::abs_cohens_d;
  if (name == "abs_t" || name == "t") return RankKey::abs_t;
  if (name == "abs_point_biserial" || name == "point_biserial") return RankKey::abs_point_biserial;
  if (name == "max_activation_diff") return RankKey::max_activation_diff;
  throw ConfigError("unknown ranking key '" + name + "'");
}

std::string to_string(RankKey key) {
  switch (key) {
    case RankKey::abs_cohens_d: return "abs_cohens_d";
    case RankKey::abs_t: return "abs_t";
    case RankKey::abs_point_biserial: return "abs_point_biserial";
    case RankKey::max_activation_diff: return "max_activation_diff";
  }
  return "?";
}

std::vector<NeuronScore> rank_neurons(std::vector<NeuronScore> scores, RankKey key, std::size_t top_k) {
  auto value = [key](const NeuronScore& s) {
    double v = 0.0;
    switch (key) {
      case RankKey::abs_cohens_d: v = std::fabs(s.cohens_d); break;
      case RankKey::abs_t: v = std::fabs(s.t_stat); break;
      case RankKey::abs_point_biserial: v = std::fabs(s.point_biserial); break;
      case RankKey::max_activation_diff: v = s.max_activation_diff; break;
    }
    return std::isnan(v) ? -kInf : v;
  };
  std::sort(scores.begin(), scores.end(), [&](const NeuronScore& a, const NeuronScore& b) {
    const double va = value(a), vb = value(b);
    if (va != vb) return va > vb;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.neuron < b.neuron;
  });
  if (scores.size() > top_k) scores.resize(top_k);
  return scores;
}

std::vector<LayerSummary> summarize_layers(const std::vector<NeuronScore>& scores, double d_cutoff) {
  std::map<int, LayerSummary> by_layer;
  std::map<int, double> sum_abs;
  for (const auto& s : scores) {
    auto& row = by_layer[s.layer];
    row.layer = s.layer;
    ++row.neurons;
    const double ad = std::fabs(s.cohens_d);
    sum_abs[s.layer] += ad;
    row.max_abs_d = std::max(row.max_abs_d, ad);
    row.count_above_cutoff += ad > d_cutoff ? 1 : 0;
    row.significant_raw += s.significant_raw ? 1 : 0;
    row.significant_bonferroni += s.significant_bonferroni ? 1 : 0;
  }
  std::vector<LayerSummary> out;
  for (auto& [layer, row] : by_layer) {
    row.mean_abs_d = sum_abs[layer] / static_cast<double>(row.neurons);
    out.push_back(row);
  }
  return out;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_scores_csv(std::ostream& out, const std::vector<NeuronScore>& scores) {
  out << "layer,neuron,cohens_d,t_stat,df,p_value,significant_raw,significant_bonferroni,"
         "activation_frequency_orig,activation_frequency_comparison,max_activation_diff,point_biserial,"
         "mean_orig,mean_comparison,diagnostic\n";
  for (const auto& s : scores) {
    out << s.layer << ',' << s.neuron << ',' << format_real(s.cohens_d) << ',' << format_real(s.t_stat) << ','
        << format_real(s.df) << ',' << format_real(s.p_value) << ',' << (s.significant_raw ? 1 : 0) << ','
        << (s.significant_bonferroni ? 1 : 0) << ',' << format_real(s.activation_frequency_orig) << ','
        << format_real(s.activation_frequency_comparison) << ',' << format_real(s.max_activation_diff) << ','
        << format_real(s.point_biserial) << ',' << format_real(s.mean_orig) << ','
        << format_real(s.mean_comparison) << ',' << '"' << s.diagnostic << '"' << '\n';
  }
}

void write_layer_summary_csv(std::ostream& out, const std::vector<LayerSummary>& rows, double d_cutoff) {
  out << "layer,neurons,mean_abs_d,max_abs_d,count_abs_d_gt_" << format_real(d_cutoff)
      << ",significant_raw,significant_bonferroni\n";
  for (const auto& r : rows) {
    out << r.layer << ',' << r.neurons << ',' << format_real(r.mean_abs_d) << ',' << format_real(r.max_abs_d) << ','
        << r.count_above_cutoff << ',' << r.significant_raw << ',' << r.significant_bonferroni << '\n';
  }
}

namespace {

// JSON has no infinities; they are written as strings and read back.
nlohmann::json real_json(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

double real_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

nlohmann::json to_json(const NeuronScore& s) {
  return {
      {"layer", s.layer},
      {"neuron", s.neuron},
      {"cohens_d", real_json(s.cohens_d)},
      {"t_stat", real_json(s.t_stat)},
      {"df", real_json(s.df)},
      {"p_value", real_json(s.p_value)},
      {"significant_raw", s.significant_raw},
      {"significant_bonferroni", s.significant_bonferroni},
      {"activation_frequency_orig", real_json(s.activation_frequency_orig)},
      {"activation_frequency_comparison", real_json(s.activation_frequency_comparison)},
      {"max_activation_diff", real_json(s.max_activation_diff)},
      {"point_biserial", real_json(s.point_biserial)},
      {"mean_orig", real_json(s.mean_orig)},
      {"mean_comparison", real_json(s.mean_comparison)},
      {"diagnostic", s.diagnostic},
  };
}

NeuronScore neuron_score_from_json(const nlohmann::json& j) {
  NeuronScore s;
  s.layer = j.at("layer").get<int>();
  s.neuron = j.at("neuron").get<int>();
  s.cohens_d = real_from_json(j.at("cohens_d"));
  s.t_stat = real_from_json(j.at("t_stat"));
  s.df = real_from_json(j.at("df"));
  s.p_value = real_from_json(j.at("p_value"));
  s.significant_raw = j.at("significant_raw").get<bool>();
  s.significant_bonferroni = j.at("significant_bonferroni").get<bool>();
  s.activation_frequency_orig = real_from_json(j.at("activation_frequency_orig"));
  s.activation_frequency_comparison = real_from_json(j.at("activation_frequency_comparison"));
  s.max_activation_diff = real_from_json(j.at("max_activation_diff"));
  s.point_biserial = real_from_json(j.at("point_biserial"));
  s.mean_orig = real_from_json(j.at("mean_orig"));
  s.mean_comparison = real_from_json(j.at("mean_comparison"));
  s.diagnostic = j.value("diagnostic", "");
  return s;
}

nlohmann::json to_json(const LayerSummary& s) {
  return {
      {"layer", s.layer},
      {"neurons", s.neurons},
      {"mean_abs_d", s.mean_abs_d},
      {"max_abs_d", s.max_abs_d},
      {"count_above_cutoff", s.count_above_cutoff},
      {"significant_raw", s.significant_raw},
      {"significant_bonferroni", s.significant_bonferroni},
  };
}

}  // namespace stylescope
