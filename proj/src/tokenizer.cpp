#include "stylescope/tokenizer.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stylescope/error.hpp"

namespace stylescope {

namespace {

std::string encode_utf8(std::uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

struct ByteTables {
  std::array<std::string, 256> to_unicode;
  std::array<std::uint32_t, 256> to_code_point{};
  std::unordered_map<std::uint32_t, std::uint8_t> from_code_point;
};

// Printable bytes map to themselves; the rest are shifted to 256 + n.
const ByteTables& byte_tables() {
  static const ByteTables tables = [] {
    ByteTables t;
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      std::uint32_t cp = direct[b] ? static_cast<std::uint32_t>(b) : next++;
      t.to_code_point[b] = cp;
      t.to_unicode[b] = encode_utf8(cp);
      t.from_code_point[cp] = static_cast<std::uint8_t>(b);
    }
    return t;
  }();
  return tables;
}

struct CodePoints {
  std::vector<UChar32> cps;
  std::vector<std::size_t> offsets;  // byte offset of each code point, plus end
};

CodePoints decode_code_points(std::string_view text) {
  CodePoints out;
  out.cps.reserve(text.size());
  out.offsets.reserve(text.size() + 1);
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    const std::int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      throw InvalidUtf8("invalid UTF-8 sequence at byte " + std::to_string(start));
    }
    out.cps.push_back(c);
    out.offsets.push_back(static_cast<std::size_t>(start));
  }
  out.offsets.push_back(text.size());
  return out;
}

bool is_letter(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_L_MASK) != 0; }
bool is_number(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_N_MASK) != 0; }
bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }
bool is_other(UChar32 c) { return !is_space(c) && !is_letter(c) && !is_number(c); }

std::string merge_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key += ' ';
  key.append(right);
  return key;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::string& byte_to_unicode(std::uint8_t byte) { return byte_tables().to_unicode[byte]; }

std::optional<std::uint8_t> unicode_to_byte(std::uint32_t code_point) {
  const auto& m = byte_tables().from_code_point;
  auto it = m.find(code_point);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

void validate_utf8(std::string_view text) { (void)decode_code_points(text); }

std::string to_valid_utf8(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    const std::int32_t start = i;
    UChar32 c = 0;
    U8_NEXT(s, i, length, c);
    if (c < 0) {
      out += "\xEF\xBF\xBD";
    } else {
      out.append(text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(vocab_json));
  } catch (const nlohmann::json::exception& e) {
    throw VocabError("malformed " + vocab_json.string() + ": " + e.what());
  }
  if (!j.is_object()) throw VocabError(vocab_json.string() + " is not a JSON object");
  std::unordered_map<std::string, TokenId> token_to_id;
  token_to_id.reserve(j.size());
  for (const auto& [token, id] : j.items()) {
    if (!id.is_number_integer()) throw VocabError("non-integer id for token " + token);
    token_to_id.emplace(token, id.get<TokenId>());
  }

  std::vector<Merge> merges;
  std::istringstream lines(read_text_file(merges_txt));
  std::string line;
  bool first = true;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.rfind("#version", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || line.find(' ', space + 1) != std::string::npos) {
      throw VocabError("malformed merge rule: '" + line + "'");
    }
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return from_parts(std::move(token_to_id), std::move(merges));
}

Vocab Vocab::from_parts(std::unordered_map<std::string, TokenId> token_to_id, std::vector<Merge> merges) {
  Vocab v;
  v.token_to_id_ = std::move(token_to_id);
  v.merges_ = std::move(merges);
  v.build_and_validate();
  return v;
}

void Vocab::build_and_validate() {
  const std::size_t n = token_to_id_.size();
  id_to_token_.assign(n, {});
  std::vector<bool> seen(n, false);
  for (const auto& [token, id] : token_to_id_) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw VocabError("token id " + std::to_string(id) + " outside dense range [0, " + std::to_string(n) + ")");
    }
    if (seen[id]) throw VocabError("duplicate token id " + std::to_string(id));
    seen[id] = true;
    id_to_token_[id] = token;
  }

  id_to_bytes_.assign(n, {});
  for (std::size_t id = 0; id < n; ++id) {
    const auto cps = decode_code_points(id_to_token_[id]);
    std::string bytes;
    bytes.reserve(cps.cps.size());
    for (UChar32 cp : cps.cps) {
      auto b = unicode_to_byte(static_cast<std::uint32_t>(cp));
      if (!b) throw VocabError("token '" + id_to_token_[id] + "' contains a character outside the byte alphabet");
      bytes += static_cast<char>(*b);
    }
    id_to_bytes_[id] = std::move(bytes);
  }

  merge_ranks_.clear();
  merge_ranks_.reserve(merges_.size());
  for (std::size_t rank = 0; rank < merges_.size(); ++rank) {
    const auto& [left, right] = merges_[rank];
    if (!token_to_id_.contains(left + right)) {
      throw VocabError("merge output '" + left + right + "' missing from vocab");
    }
    merge_ranks_.emplace(merge_key(left, right), static_cast<int>(rank));
  }
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw UnknownTokenId("token id " + std::to_string(id) + " >= vocab size " + std::to_string(size()));
  }
  return id_to_token_[id];
}

const std::string& Vocab::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_bytes_.size()) {
    throw UnknownTokenId("token id " + std::to_string(id) + " >= vocab size " + std::to_string(size()));
  }
  return id_to_bytes_[id];
}

int Vocab::merge_rank(std::string_view left, std::string_view right) const {
  auto it = merge_ranks_.find(merge_key(left, right));
  return it == merge_ranks_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------
// Tokenizer

// Mirrors the GPT-2 pattern
//   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
// alternative by alternative, including the one-character backtrack of
// \s+(?!\S) before a non-space.
std::vector<std::string_view> Tokenizer::pre_tokenize(std::string_view text) {
  const CodePoints cp = decode_code_points(text);
  const auto& c = cp.cps;
  const std::size_t n = c.size();
  std::vector<std::string_view> pieces;
  auto emit = [&](std::size_t begin, std::size_t end) {
    pieces.push_back(text.substr(cp.offsets[begin], cp.offsets[end] - cp.offsets[begin]));
  };

  std::size_t i = 0;
  while (i < n) {
    if (c[i] == '\'' && i + 1 < n) {
      const UChar32 a = c[i + 1];
      if (a == 's' || a == 't' || a == 'm' || a == 'd') {
        emit(i, i + 2);
        i += 2;
        continue;
      }
      if (i + 2 < n) {
        const UChar32 b = c[i + 2];
        if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) {
          emit(i, i + 3);
          i += 3;
          continue;
        }
      }
    }

    bool matched = false;
    for (auto cls : {&is_letter, &is_number, &is_other}) {
      std::size_t j = (c[i] == ' ' && i + 1 < n && cls(c[i + 1])) ? i + 1 : i;
      if (!cls(c[j])) continue;
      std::size_t k = j;
      while (k < n && cls(c[k])) ++k;
      emit(i, k);
      i = k;
      matched = true;
      break;
    }
    if (matched) continue;

    std::size_t k = i;
    while (k < n && is_space(c[k])) ++k;
    if (k < n && k - i > 1) --k;
    emit(i, k);
    i = k;
  }
  return pieces;
}

void Tokenizer::bpe(std::string_view piece, TokenSequence& out) const {
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (char ch : piece) symbols.push_back(byte_to_unicode(static_cast<std::uint8_t>(ch)));

  while (symbols.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
      const int r = vocab_.merge_rank(symbols[k], symbols[k + 1]);
      if (r >= 0 && r < best_rank) {
        best_rank = r;
        best = k;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;

    const std::string left = symbols[best];
    const std::string right = symbols[best + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size();) {
      if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
        merged.push_back(left + right);
        k += 2;
      } else {
        merged.push_back(std::move(symbols[k]));
        ++k;
      }
    }
    symbols = std::move(merged);
  }

  for (const auto& s : symbols) {
    auto id = vocab_.find(s);
    if (!id) throw VocabError("BPE produced symbol '" + s + "' that is not in the vocab");
    out.push_back(*id);
  }
}

TokenSequence Tokenizer::encode(std::string_view text, std::vector<std::size_t>* byte_offsets) const {
  TokenSequence ids;
  if (byte_offsets) byte_offsets->clear();
  for (std::string_view piece : pre_tokenize(text)) {
    const std::size_t first = ids.size();
    bpe(piece, ids);
    if (byte_offsets) {
      std::size_t offset = static_cast<std::size_t>(piece.data() - text.data());
      for (std::size_t k = first; k < ids.size(); ++k) {
        byte_offsets->push_back(offset);
        offset += vocab_.token_bytes(ids[k]).size();
      }
    }
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += vocab_.token_bytes(id);
  return out;
}

const std::string& Tokenizer::token_text(TokenId id) const { return vocab_.token_bytes(id); }

}  // namespace stylescope
