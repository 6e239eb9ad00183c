#pragma once

// Shared helpers for the test binaries: repository paths, small random
// models and a few generators for property tests.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "stylescope/checkpoint.hpp"
#include "stylescope/model.hpp"
#include "stylescope/tokenizer.hpp"

namespace test_support {

namespace fs = std::filesystem;

inline fs::path source_dir() { return STYLESCOPE_SOURCE_DIR; }
inline fs::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }
inline fs::path data_file(const std::string& name) { return source_dir() / "tests" / "data" / name; }
inline fs::path vocab_path() { return source_dir() / "assets" / "gpt2" / "vocab.json"; }
inline fs::path merges_path() { return source_dir() / "assets" / "gpt2" / "merges.txt"; }

inline const stylescope::Tokenizer& gpt2_tokenizer() {
  static const stylescope::Tokenizer tok = stylescope::Tokenizer::load(vocab_path(), merges_path());
  return tok;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("stylescope_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline stylescope::ModelConfig tiny_config(int vocab = 50257) {
  stylescope::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 32;
  c.d_mlp = 128;
  c.vocab_size = vocab;
  c.n_ctx = 128;
  return c;
}

// Larger embedding and MLP scales than the defaults so that hook-site
// interventions visibly move the logits.
inline stylescope::ModelBundle tiny_model(std::uint64_t seed = 11, int vocab = 50257) {
  const auto cfg = tiny_config(vocab);
  stylescope::SyntheticScales scales;
  scales.token_embedding = 1.0f;
  scales.mlp_in_weight = 0.3f;
  scales.mlp_out_weight = 0.3f;
  return stylescope::bundle_from_tensors(stylescope::synthetic_checkpoint(cfg, seed, scales), cfg);
}

inline std::vector<stylescope::TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<int> pick(0, vocab - 1);
  std::vector<stylescope::TokenId> out(n);
  for (auto& t : out) t = pick(rng);
  return out;
}

// Random well-formed UTF-8 drawn from ASCII, Latin-1, CJK, emoji and
// whitespace code points.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t max_code_points) {
  std::uniform_int_distribution<std::size_t> len(0, max_code_points);
  std::uniform_int_distribution<int> bucket(0, 5);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t cp = 0;
    switch (bucket(rng)) {
      case 0: cp = std::uniform_int_distribution<std::uint32_t>(0x20, 0x7E)(rng); break;
      case 1: cp = std::uniform_int_distribution<std::uint32_t>(0xA0, 0x24F)(rng); break;
      case 2: cp = std::uniform_int_distribution<std::uint32_t>(0x4E00, 0x9FFF)(rng); break;
      case 3: cp = std::uniform_int_distribution<std::uint32_t>(0x1F300, 0x1F64F)(rng); break;
      case 4: cp = " \n\t\r"[std::uniform_int_distribution<int>(0, 3)(rng)]; break;
      default: cp = std::uniform_int_distribution<std::uint32_t>(0x01, 0x7F)(rng); break;
    }
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
  }
  return out;
}

inline float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace test_support
