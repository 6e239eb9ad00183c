#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylescope/activations.hpp"

namespace stylescope {

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

double mean(std::span<const double> xs);
// Unbiased (n - 1) variance, two-pass.
double sample_variance(std::span<const double> xs);

// Two-sided p-value of a Student t statistic with `df` degrees of freedom,
// exact via the regularized incomplete beta function.
double student_t_p_two_sided(double t, double df);

// Standardized mean difference with pooled sample variance. Pooled sd of zero
// with different means throws DegenerateVariance; with equal means, 0.
double cohens_d(std::span<const double> xs, std::span<const double> ys);

// Unequal-variance t with Welch-Satterthwaite df.
TTest welch_t(std::span<const double> xs, std::span<const double> ys);

// Paired t on differences xs[i] - ys[i], df = n - 1. Throws InsufficientPairs
// for n < 2. Zero spread of the differences gives t = 0, p = 1 for a zero
// mean difference and t = +-inf, p = 0 otherwise.
TTest paired_t(std::span<const double> xs, std::span<const double> ys);

// Fraction of values strictly above `threshold`.
double activation_frequency(std::span<const double> values, double threshold = 0.1);
double max_activation_diff(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of values against 0/1 labels.
double point_biserial(std::span<const double> values, std::span<const int> labels);

struct Bonferroni {
  double alpha = 0.001;
  std::uint64_t tests = 98304;  // 24 layers x 4096 neurons

  // Rounded alpha / tests, for reports.
  double threshold() const { return alpha / static_cast<double>(tests); }
  // Exact p * tests < alpha: the product's rounding error is recovered with
  // fma, so a p sitting on the rounded threshold is still classified right.
  bool significant(double p) const {
    const double n = static_cast<double>(tests);
    const double prod = p * n;
    if (prod != alpha) return prod < alpha;
    return std::fma(p, n, -prod) < 0.0;
  }
};

struct StatsOptions {
  Bonferroni bonferroni;
  double raw_alpha = 0.05;
  double frequency_threshold = 0.1;
};

struct NeuronScore {
  int layer = 0;
  int neuron = 0;
  double cohens_d = 0.0;
  double t_stat = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  bool significant_raw = false;
  bool significant_bonferroni = false;
  double activation_frequency_orig = 0.0;
  double activation_frequency_comparison = 0.0;
  double max_activation_diff = 0.0;
  double point_biserial = 0.0;
  double mean_orig = 0.0;
  double mean_comparison = 0.0;
  std::string diagnostic;  // empty unless some metric hit a degenerate case
};

// Scores every neuron of every layer that has both corpora. Frequencies and
// max difference use the token-level summaries when present, chunk rows
// otherwise. Degenerate metrics are recorded in `diagnostic` instead of
// aborting.
std::vector<NeuronScore> score_all(const ActivationSet& matrices, const StatsOptions& options = {});

NeuronScore score_neuron(int layer, int neuron, std::span<const double> orig, std::span<const double> comparison,
                         const StatsOptions& options);

enum class RankKey { abs_cohens_d, abs_t, abs_point_biserial, max_activation_diff };
RankKey parse_rank_key(const std::string& name);
std::string to_string(RankKey key);

// Descending by key, ties by (layer, neuron) ascending, truncated to top_k.
std::vector<NeuronScore> rank_neurons(std::vector<NeuronScore> scores, RankKey key = RankKey::abs_cohens_d,
                                      std::size_t top_k = 500);

struct LayerSummary {
  int layer = 0;
  std::size_t neurons = 0;
  double mean_abs_d = 0.0;
  double max_abs_d = 0.0;
  std::size_t count_above_cutoff = 0;
  std::size_t significant_raw = 0;
  std::size_t significant_bonferroni = 0;
};

std::vector<LayerSummary> summarize_layers(const std::vector<NeuronScore>& scores, double d_cutoff = 1.0);

// Fixed-format real for reports: shortest round-trip-safe "%.10g".
std::string format_real(double v);

void write_scores_csv(std::ostream& out, const std::vector<NeuronScore>& scores);
void write_layer_summary_csv(std::ostream& out, const std::vector<LayerSummary>& rows, double d_cutoff);
nlohmann::json to_json(const NeuronScore& s);
NeuronScore neuron_score_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LayerSummary& s);

}  // namespace stylescope
