#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stylescope/corpus.hpp"
#include "stylescope/matrix.hpp"
#include "stylescope/model.hpp"

namespace stylescope {

// Token-level statistics gathered alongside the chunk means, one entry per
// neuron: how many tokens exceeded `threshold` and the largest value seen.
struct TokenSummary {
  std::uint64_t token_count = 0;
  float threshold = 0.1f;
  std::vector<std::uint64_t> above;
  std::vector<float> max;

  friend bool operator==(const TokenSummary&, const TokenSummary&) = default;
};

// Per-chunk mean post-GELU activations for one (layer, corpus): rows are
// chunks, columns are MLP neurons.
struct ActivationMatrix {
  int layer = 0;
  CorpusLabel label = CorpusLabel::original;
  Matrix values;
  TokenSummary tokens;

  friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;
};

using ActivationKey = std::pair<int, CorpusLabel>;
using ActivationSet = std::map<ActivationKey, ActivationMatrix>;

// Layers 16..23, the late half of GPT-2 medium.
std::vector<int> default_extraction_layers();

// One forward per chunk (stopping after the deepest requested layer) with
// mlp_post_act captured; each row is the mean over all token positions.
ActivationSet extract_activations(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                  const std::vector<int>& layers, float frequency_threshold = 0.1f);

struct TokenActivationRecord {
  int chunk_index = 0;
  int position = 0;
  int neuron = 0;
  float value = 0.0f;
};

// Lazily yields every (token, neuron) activation of `layer` for the given
// neurons, one chunk forward at a time. Order: chunk, position, neuron (in
// the order given).
class TokenActivationStream {
 public:
  TokenActivationStream(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks, int layer,
                        std::vector<int> neurons);

  std::optional<TokenActivationRecord> next();

 private:
  bool load_next_chunk();

  const ModelBundle& bundle_;
  const std::vector<CorpusChunk>& chunks_;
  int layer_;
  std::vector<int> neurons_;
  std::size_t chunk_ = 0;
  Matrix current_;
  int current_chunk_index_ = -1;
  std::size_t row_ = 0;
  std::size_t neuron_slot_ = 0;
};

TokenActivationStream stream_token_activations(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                               int layer, std::vector<int> neurons);

// Binary matrix file (see docs/formats.md) plus a JSON sidecar next to it
// ("<path>.json") with shape, labels, chunk manifest hash and the token
// summary.
void save_activation_matrix(const std::filesystem::path& path, const ActivationMatrix& matrix,
                            const std::string& chunk_manifest_hash);
ActivationMatrix load_activation_matrix(const std::filesystem::path& path);
std::string activation_file_name(int layer, CorpusLabel label);

void write_matrix_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_file(const std::filesystem::path& path);

}  // namespace stylescope
