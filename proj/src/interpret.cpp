#include "stylescope/interpret.hpp"

#include <algorithm>
#include <ostream>
#include <queue>

#include "stylescope/activations.hpp"
#include "stylescope/error.hpp"
#include "stylescope/stats.hpp"

namespace stylescope {

namespace {

struct Hit {
  float value = 0.0f;
  int chunk = 0;  // position in the filtered chunk list
  int position = 0;
};

// Strict "ranks ahead of": higher value, then earlier chunk, then earlier position.
bool ahead(const Hit& a, const Hit& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.chunk != b.chunk) return a.chunk < b.chunk;
  return a.position < b.position;
}

struct AheadCmp {
  bool operator()(const Hit& a, const Hit& b) const { return ahead(a, b); }
};

// Bounded selection: the queue's top is the worst retained hit.
class TopN {
 public:
  explicit TopN(std::size_t n) : n_(n) {}

  void offer(const Hit& h) {
    if (n_ == 0) return;
    if (heap_.size() < n_) {
      heap_.push(h);
    } else if (ahead(h, heap_.top())) {
      heap_.pop();
      heap_.push(h);
    }
  }

  std::vector<Hit> sorted() {
    std::vector<Hit> out;
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t n_;
  std::priority_queue<Hit, std::vector<Hit>, AheadCmp> heap_;
};

std::string markdown_inline(std::string s) {
  std::string out;
  for (char c : s) {
    if (c == '\n') {
      out += "\\n";
    } else if (c == '|' || c == '*' || c == '_' || c == '`') {
      out += '\\';
      out += c;
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::map<int, std::vector<ContextWindow>> max_activating_contexts(const ModelBundle& bundle,
                                                                  const std::vector<CorpusChunk>& chunks,
                                                                  const Tokenizer& tokenizer, int layer,
                                                                  const std::vector<int>& neurons, std::size_t top_n,
                                                                  std::size_t window) {
  std::vector<CorpusChunk> originals;
  for (const auto& c : chunks) {
    if (c.label == CorpusLabel::original) originals.push_back(c);
  }
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < neurons.size(); ++i) slot.emplace(neurons[i], i);
  std::vector<TopN> tops(neurons.size(), TopN(top_n));

  std::map<int, std::vector<ContextWindow>> out;
  for (int n : neurons) out[n];
  if (top_n == 0 || neurons.empty()) return out;

  // The stream reports chunk.index; map it back to the filtered list position.
  std::map<int, int> chunk_slot;
  for (std::size_t i = 0; i < originals.size(); ++i) chunk_slot.emplace(originals[i].index, static_cast<int>(i));

  auto stream = stream_token_activations(bundle, originals, layer, neurons);
  while (auto rec = stream.next()) {
    tops[slot.at(rec->neuron)].offer({rec->value, chunk_slot.at(rec->chunk_index), rec->position});
  }

  const int before = static_cast<int>(window / 2);
  const int after = window == 0 ? 0 : static_cast<int>(window) - before - 1;
  for (std::size_t i = 0; i < neurons.size(); ++i) {
    if (out[neurons[i]].size() > 0) continue;  // duplicate neuron id
    for (const Hit& h : tops[i].sorted()) {
      const auto& chunk = originals[static_cast<std::size_t>(h.chunk)];
      const int len = static_cast<int>(chunk.tokens.size());
      ContextWindow w;
      w.layer = layer;
      w.neuron = neurons[i];
      w.activation = h.value;
      w.chunk_index = chunk.index;
      w.position = h.position;
      w.center_token = chunk.tokens[static_cast<std::size_t>(h.position)];
      w.context_begin = std::max(0, h.position - before);
      w.context_end = std::min(len, h.position + after + 1);
      const std::span<const TokenId> toks(chunk.tokens);
      w.before = to_valid_utf8(tokenizer.decode(
          toks.subspan(static_cast<std::size_t>(w.context_begin), static_cast<std::size_t>(h.position - w.context_begin))));
      w.center_text = to_valid_utf8(tokenizer.decode(toks.subspan(static_cast<std::size_t>(h.position), 1)));
      w.after = to_valid_utf8(tokenizer.decode(toks.subspan(static_cast<std::size_t>(h.position + 1),
                                                            static_cast<std::size_t>(w.context_end - h.position - 1))));
      out[neurons[i]].push_back(std::move(w));
    }
  }
  return out;
}

std::vector<ContextWindow> max_activating_contexts(const ModelBundle& bundle, const std::vector<CorpusChunk>& chunks,
                                                   const Tokenizer& tokenizer, int layer, int neuron,
                                                   std::size_t top_n, std::size_t window) {
  return max_activating_contexts(bundle, chunks, tokenizer, layer, std::vector<int>{neuron}, top_n, window)
      .at(neuron);
}

nlohmann::json to_json(const ContextWindow& w) {
  return {
      {"layer", w.layer},
      {"neuron", w.neuron},
      {"activation", w.activation},
      {"center_token", w.center_token},
      {"center_text", w.center_text},
      {"before", w.before},
      {"after", w.after},
      {"chunk_index", w.chunk_index},
      {"position", w.position},
      {"context_begin", w.context_begin},
      {"context_end", w.context_end},
  };
}

void write_contexts_markdown(std::ostream& out, const std::vector<std::vector<ContextWindow>>& per_neuron) {
  out << "# Max-activating contexts\n";
  for (const auto& windows : per_neuron) {
    if (windows.empty()) continue;
    out << "\n## L" << windows.front().layer << " N" << windows.front().neuron << "\n\n";
    out << "| # | activation | chunk | pos | context |\n|---|---|---|---|---|\n";
    int i = 1;
    for (const auto& w : windows) {
      out << "| " << i++ << " | " << format_real(w.activation) << " | " << w.chunk_index << " | " << w.position
          << " | " << markdown_inline(w.before) << "**[" << markdown_inline(w.center_text) << "]**"
          << markdown_inline(w.after) << " |\n";
    }
  }
}

LensReport lens_report(const ModelBundle& bundle, const Tokenizer& tokenizer, const std::string& prompt, int position,
                       TokenId target) {
  const TokenSequence tokens = tokenizer.encode(prompt);
  if (tokens.empty()) throw EmptyText("lens prompt is empty");
  if (position < 0) position += static_cast<int>(tokens.size());
  if (position < 0 || position >= static_cast<int>(tokens.size())) {
    throw ConfigError("lens position outside the prompt's " + std::to_string(tokens.size()) + " tokens");
  }
  if (target < 0 || target >= bundle.config.vocab_size) throw UnknownTokenId("lens target outside vocabulary");

  ForwardOptions options;
  options.capture = all_resid_post(bundle.config);
  const ForwardTrace trace = forward(bundle, std::span<const TokenId>(tokens).first(static_cast<std::size_t>(position) + 1),
                                     options);
  LensReport report;
  report.prompt = prompt;
  report.position = position;
  report.target = target;
  for (const auto& rec : logit_lens(bundle, trace, position, target)) {
    const auto logits = lens_logits(bundle, trace.at({rec.layer, HookSite::resid_post}).row(static_cast<std::size_t>(position)));
    // Lowest id wins ties, consistent with rank.
    const auto best = std::max_element(logits.begin(), logits.end());
    report.rows.push_back({rec.layer, rec.logit, rec.rank, static_cast<TokenId>(best - logits.begin()), *best});
  }
  return report;
}

nlohmann::json to_json(const LensReport& r, const Tokenizer& tokenizer) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"layer", row.layer},
                    {"target_logit", row.target_logit},
                    {"target_rank", row.target_rank},
                    {"top_token", row.top_token},
                    {"top_text", to_valid_utf8(tokenizer.token_text(row.top_token))},
                    {"top_logit", row.top_logit}});
  }
  return {{"prompt", r.prompt},
          {"position", r.position},
          {"target", r.target},
          {"target_text", to_valid_utf8(tokenizer.token_text(r.target))},
          {"layers", rows}};
}

void write_lens_csv(std::ostream& out, const std::vector<LensReport>& reports) {
  out << "prompt_index,position,target,layer,target_logit,target_rank,top_token\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& row : reports[i].rows) {
      out << i << ',' << reports[i].position << ',' << reports[i].target << ',' << row.layer << ','
          << format_real(row.target_logit) << ',' << row.target_rank << ',' << row.top_token << '\n';
    }
  }
}

}  // namespace stylescope
