#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylescope/corpus.hpp"
#include "stylescope/model.hpp"
#include "stylescope/tokenizer.hpp"

namespace stylescope {

struct ContextWindow {
  int layer = 0;
  int neuron = 0;
  float activation = 0.0f;
  TokenId center_token = 0;
  std::string center_text;
  std::string before;  // decoded tokens preceding the center
  std::string after;   // decoded tokens following it
  int chunk_index = 0;
  int position = 0;  // within the chunk
  int context_begin = 0;
  int context_end = 0;  // exclusive; the center lies in [context_begin, context_end)
};

// Token-level scan of the original-corpus chunks. Keeps the top_n positions
// by activation (ties: earlier chunk, then earlier position). The window
// holds `window` tokens: window/2 before the center, the rest after it,
// clipped at the chunk edges.
std::vector<ContextWindow> max_activating_contexts(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                                   const Tokenizer& tokenizer, int layer, int neuron,
                                                   std::size_t top_n = 10, std::size_t window = 20);

// Same, for several neurons of one layer in a single pass over the corpus.
std::map<int, std::vector<ContextWindow>> max_activating_contexts(const ModelBundle& bundle,
                                                                  const std::vector<CorpusChunk>& chunks,
                                                                  const Tokenizer& tokenizer, int layer,
                                                                  const std::vector<int>& neurons,
                                                                  std::size_t top_n = 10, std::size_t window = 20);

nlohmann::json to_json(const ContextWindow& w);
// One section per neuron; the center token is shown as **[token]**.
void write_contexts_markdown(std::ostream& out, const std::vector<std::vector<ContextWindow>>& per_neuron);

// Logit lens at one position of a prompt, with the lens's own top-1 token
// per layer for context.
struct LensRow {
  int layer = 0;
  float target_logit = 0.0f;
  int target_rank = 0;
  TokenId top_token = 0;
  float top_logit = 0.0f;
};

struct LensReport {
  std::string prompt;
  int position = 0;
  TokenId target = 0;
  std::vector<LensRow> rows;
};

// `position` indexes the prompt's tokens; the lens reads the residual there
// and asks how highly `target` is ranked.
LensReport lens_report(const ModelBundle& bundle, const Tokenizer& tokenizer, const std::string& prompt,
                       int position, TokenId target);

nlohmann::json to_json(const LensReport& r, const Tokenizer& tokenizer);
void write_lens_csv(std::ostream& out, const std::vector<LensReport>& reports);

}  // namespace stylescope
