#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stylescope/hooks.hpp"
#include "stylescope/matrix.hpp"
#include "stylescope/tokenizer.hpp"

namespace stylescope {

struct ModelConfig {
  int n_layers = 24;
  int n_heads = 16;
  int d_model = 1024;
  int d_mlp = 4096;
  int vocab_size = 50257;
  int n_ctx = 1024;
  float layer_norm_eps = 1e-5f;

  static ModelConfig gpt2_small();
  static ModelConfig gpt2_medium();

  int head_dim() const { return d_model / n_heads; }
  std::int64_t neuron_count() const { return static_cast<std::int64_t>(n_layers) * d_mlp; }
  // Throws ShapeMismatch on inconsistent dimensions.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Linear weights are stored [out x in] row-major; y = x W^T + b.
struct BlockWeights {
  std::vector<float> ln1_scale, ln1_shift;
  Matrix attn_qkv_weight;  // [3 d_model x d_model]; rows q | k | v
  std::vector<float> attn_qkv_bias;
  Matrix attn_out_weight;  // [d_model x d_model]
  std::vector<float> attn_out_bias;
  std::vector<float> ln2_scale, ln2_shift;
  Matrix mlp_in_weight;  // [d_mlp x d_model]
  std::vector<float> mlp_in_bias;
  Matrix mlp_out_weight;  // [d_model x d_mlp]
  std::vector<float> mlp_out_bias;
};

struct ModelBundle {
  ModelConfig config;
  Matrix token_embedding;     // [vocab x d_model]; also the (tied) unembedding
  Matrix position_embedding;  // [n_ctx x d_model]
  std::vector<BlockWeights> blocks;
  std::vector<float> final_ln_scale, final_ln_shift;

  // Throws ShapeMismatch / NonFiniteWeight.
  void validate() const;
};

float gelu(float x);

struct ForwardOptions {
  std::vector<HookPoint> capture;
  std::vector<InterventionSpec> interventions;
  // Absolute positions below this are left untouched by interventions.
  int intervene_from_position = 0;
  // Stop after this block (no final norm, no logits); -1 runs the whole model.
  int stop_after_layer = -1;
  // Layers whose attention probabilities are recorded.
  std::vector<int> attention_pattern_layers;
};

struct ForwardTrace {
  Matrix logits;  // [new positions x vocab]; empty when stopped early
  std::map<HookPoint, Matrix> captured;
  // Per recorded layer: rows are (head, query) pairs, head-major;
  // columns are absolute key positions. Masked entries are exactly 0.
  std::map<int, Matrix> attention_patterns;

  // Throws MissingCapture.
  const Matrix& at(HookPoint point) const;
};

// Per-layer key/value history for incremental decoding.
class KvCache {
 public:
  explicit KvCache(const ModelConfig& config);
  int length() const { return length_; }
  void clear() { length_ = 0; }

 private:
  friend ForwardTrace forward_incremental(const ModelBundle&, KvCache&, std::span<const TokenId>,
                                          const ForwardOptions&);
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  int length_ = 0;
};

// Full forward over `tokens` (positions 0..T-1). Throws SequenceTooLong,
// InvalidHookPoint, InvalidIntervention.
ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, const ForwardOptions& options = {});

ForwardTrace forward(const ModelBundle& bundle, std::span<const TokenId> tokens, std::vector<HookPoint> capture,
                     std::vector<InterventionSpec> interventions = {});

// Appends `tokens` after the cached positions. Trace rows cover only the new
// positions; the cache is advanced on success.
ForwardTrace forward_incremental(const ModelBundle& bundle, KvCache& cache, std::span<const TokenId> tokens,
                                 const ForwardOptions& options = {});

// Final layer norm followed by the tied unembedding, for one residual row.
std::vector<float> lens_logits(const ModelBundle& bundle, std::span<const float> residual);

struct LensRecord {
  int layer = 0;
  float logit = 0.0f;
  int rank = 0;  // 1 = highest logit; ties go to the lower token id
};

// Needs resid_post captured for every layer. Throws MissingCapture.
std::vector<LensRecord> logit_lens(const ModelBundle& bundle, const ForwardTrace& trace, int position, TokenId target);

// Every resid_post hook for the bundle's layers.
std::vector<HookPoint> all_resid_post(const ModelConfig& config);

}  // namespace stylescope
