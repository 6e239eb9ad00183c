#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stylescope/model.hpp"

namespace stylescope {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::size_t numel() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Keyed by GPT-2 tensor name ("h.3.mlp.c_fc.weight", ...). Linear weights
// are in the checkpoint's (in, out) orientation.
using TensorMap = std::map<std::string, Tensor>;

// safetensors container; F32, F16 and BF16 payloads are read (converted to
// float32). Writing always emits F32.
TensorMap read_safetensors(const std::filesystem::path& path);
void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors);

// Raw container for test-authored models; layout in docs/formats.md.
struct RawCheckpoint {
  ModelConfig config;
  TensorMap tensors;
};
RawCheckpoint read_raw_checkpoint(const std::filesystem::path& path);
void write_raw_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const TensorMap& tensors);

// Sniffs the container from its first bytes.
bool is_raw_checkpoint(const std::filesystem::path& path);

// Dimensions recoverable from tensor shapes; n_heads is not, so it is taken
// from `n_heads` (GPT-2 uses d_model / 64).
ModelConfig infer_config(const TensorMap& tensors, std::optional<int> n_heads = std::nullopt);

// Maps GPT-2 names to the internal layout, transposing (in, out) linear
// weights to (out, in). A leading "transformer." prefix is accepted; the
// causal-mask buffers and lm_head.weight (tied) are ignored.
// Throws MissingTensor / ShapeMismatch / NonFiniteWeight.
ModelBundle bundle_from_tensors(const TensorMap& tensors, const ModelConfig& config);
TensorMap tensors_from_bundle(const ModelBundle& bundle);

// Loads either container. With no config the raw header's config is used,
// or, for safetensors, one inferred from the tensor shapes.
ModelBundle load_checkpoint(const std::filesystem::path& path, std::optional<ModelConfig> config = std::nullopt);

// Half-widths of the uniform distributions used by synthetic_checkpoint.
struct SyntheticScales {
  float token_embedding = 0.2f;
  float position_embedding = 0.05f;
  float ln_weight = 0.1f;  // around 1.0
  float ln_bias = 0.02f;
  float attn_weight = 0.06f;
  float attn_proj_weight = 0.04f;
  float mlp_in_weight = 0.06f;
  float mlp_out_weight = 0.03f;
  float bias = 0.02f;
};

// Deterministic checkpoint in GPT-2 naming and orientation. Element g of
// the concatenation (in canonical tensor order) is
//   u = (splitmix64(seed + (g + 1) * 0x9E3779B97F4A7C15) >> 40) * 2^-24
//   value = (u - 0.5f) * (2 * half_width)      [+ 1.0f for layer-norm scales]
// evaluated in float32.
TensorMap synthetic_checkpoint(const ModelConfig& config, std::uint64_t seed, const SyntheticScales& scales = {});

// Canonical tensor order of a GPT-2 checkpoint for `config`.
std::vector<std::pair<std::string, std::vector<std::int64_t>>> gpt2_tensor_layout(const ModelConfig& config);

}  // namespace stylescope
