#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "stylescope/tokenizer.hpp"

namespace stylescope {

enum class CorpusLabel { original, comparison };

std::string_view to_string(CorpusLabel label);
CorpusLabel parse_corpus_label(std::string_view name);

struct CorpusChunk {
  CorpusLabel label = CorpusLabel::original;
  int index = 0;
  TokenSequence tokens;
  std::size_t token_begin = 0;  // offset of tokens[0] in the corpus token list
  std::size_t byte_begin = 0;   // source span, byte offsets into the UTF-8 file
  std::size_t byte_end = 0;
};

struct ChunkWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Window boundaries over `token_count` tokens at stride chunk_size - overlap.
// A tail of at least stride/2 uncovered tokens gets its own shorter window;
// a shorter tail is absorbed by sliding the last window back so it ends at
// the final token. Throws InvalidOverlap / EmptyCorpus.
std::vector<ChunkWindow> chunk_windows(std::size_t token_count, std::size_t chunk_size, std::size_t overlap);

// Tokenizes `text` and cuts it into windows. Throws EmptyCorpus,
// InvalidOverlap, InvalidUtf8.
std::vector<CorpusChunk> chunk_corpus(std::string_view text, CorpusLabel label, const Tokenizer& tokenizer,
                                      std::size_t chunk_size = 512, std::size_t overlap = 128);

}  // namespace stylescope
