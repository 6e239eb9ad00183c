#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace stylescope {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kEndOfText = 50256;

// GPT-2 byte <-> printable-unicode proxy mapping. Each byte maps to one code
// point, returned here as its UTF-8 encoding.
const std::string& byte_to_unicode(std::uint8_t byte);
// Inverse of byte_to_unicode on a single code point; nullopt outside the image.
std::optional<std::uint8_t> unicode_to_byte(std::uint32_t code_point);

class Vocab {
 public:
  using Merge = std::pair<std::string, std::string>;

  // Reads vocab.json (token -> id) and merges.txt (one "a b" rule per line,
  // optional "#version" header). Validates on load.
  static Vocab load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt);
  static Vocab from_parts(std::unordered_map<std::string, TokenId> token_to_id, std::vector<Merge> merges);

  std::size_t size() const { return id_to_token_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;
  // Raw bytes the token stands for (byte-decoded).
  const std::string& token_bytes(TokenId id) const;
  // Merge rank, or -1 when (left, right) is not a rule.
  int merge_rank(std::string_view left, std::string_view right) const;
  std::size_t merge_count() const { return merges_.size(); }

 private:
  Vocab() = default;
  void build_and_validate();

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::string> id_to_bytes_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, int> merge_ranks_;
};

// Byte-level BPE over a Vocab. Immutable after construction; encode/decode
// are safe to call concurrently.
class Tokenizer {
 public:
  explicit Tokenizer(Vocab vocab) : vocab_(std::move(vocab)) {}
  static Tokenizer load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
    return Tokenizer(Vocab::load(vocab_json, merges_txt));
  }

  // Throws InvalidUtf8. When byte_offsets is given it receives the byte
  // offset in `text` where each token starts.
  TokenSequence encode(std::string_view text, std::vector<std::size_t>* byte_offsets = nullptr) const;
  // Throws UnknownTokenId. The result may be invalid UTF-8 when the ids
  // split a multi-byte character.
  std::string decode(std::span<const TokenId> ids) const;
  const std::string& token_text(TokenId id) const;

  const Vocab& vocab() const { return vocab_; }

  // GPT-2 pre-tokenizer split; pieces are views into `text`.
  static std::vector<std::string_view> pre_tokenize(std::string_view text);

 private:
  void bpe(std::string_view piece, TokenSequence& out) const;

  Vocab vocab_;
};

// Throws InvalidUtf8 with the byte offset of the first bad sequence.
void validate_utf8(std::string_view text);

// Replaces each ill-formed sequence with U+FFFD. Decoding a token window can
// cut a multi-byte character; reports use this before emitting JSON.
std::string to_valid_utf8(std::string_view text);

}  // namespace stylescope
