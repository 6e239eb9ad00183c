#include "stylescope/corpus.hpp"

#include <string>

#include "stylescope/error.hpp"

namespace stylescope {

std::string_view to_string(CorpusLabel label) {
  return label == CorpusLabel::original ? "original" : "comparison";
}

CorpusLabel parse_corpus_label(std::string_view name) {
  if (name == "original") return CorpusLabel::original;
  if (name == "comparison") return CorpusLabel::comparison;
  throw ConfigError("unknown corpus label '" + std::string(name) + "'");
}

std::vector<ChunkWindow> chunk_windows(std::size_t token_count, std::size_t chunk_size, std::size_t overlap) {
  if (chunk_size == 0 || overlap >= chunk_size) {
    throw InvalidOverlap("overlap " + std::to_string(overlap) + " must be smaller than chunk size " +
                         std::to_string(chunk_size));
  }
  if (token_count == 0) throw EmptyCorpus("corpus has no tokens");

  const std::size_t stride = chunk_size - overlap;
  std::vector<ChunkWindow> windows;
  if (token_count <= chunk_size) {
    windows.push_back({0, token_count});
    return windows;
  }
  std::size_t begin = 0;
  while (begin + chunk_size <= token_count) {
    windows.push_back({begin, begin + chunk_size});
    begin += stride;
  }
  const std::size_t covered = windows.back().end;
  const std::size_t remainder = token_count - covered;
  if (remainder == 0) return windows;
  if (2 * remainder >= stride) {
    windows.push_back({begin, token_count});
  } else {
    windows.push_back({token_count - chunk_size, token_count});
  }
  return windows;
}

std::vector<CorpusChunk> chunk_corpus(std::string_view text, CorpusLabel label, const Tokenizer& tokenizer,
                                      std::size_t chunk_size, std::size_t overlap) {
  if (overlap >= chunk_size) {
    throw InvalidOverlap("overlap " + std::to_string(overlap) + " must be smaller than chunk size " +
                         std::to_string(chunk_size));
  }
  if (text.empty()) throw EmptyCorpus(std::string(to_string(label)) + " corpus is empty");
  std::vector<std::size_t> offsets;
  const TokenSequence tokens = tokenizer.encode(text, &offsets);
  if (tokens.empty()) throw EmptyCorpus(std::string(to_string(label)) + " corpus produced no tokens");

  std::vector<CorpusChunk> chunks;
  int index = 0;
  for (const auto& w : chunk_windows(tokens.size(), chunk_size, overlap)) {
    CorpusChunk c;
    c.label = label;
    c.index = index++;
    c.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(w.begin),
                    tokens.begin() + static_cast<std::ptrdiff_t>(w.end));
    c.token_begin = w.begin;
    c.byte_begin = offsets[w.begin];
    c.byte_end = w.end < offsets.size() ? offsets[w.end] : text.size();
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace stylescope
