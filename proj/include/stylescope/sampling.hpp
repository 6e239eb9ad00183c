#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "stylescope/tokenizer.hpp"

namespace stylescope {

// Deterministic random source for generation: std::mt19937_64 seeded with
// the configured seed. Each uniform() consumes exactly one engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Uniform in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Softmax of logits / temperature, in double precision.
std::vector<double> softmax(std::span<const float> logits, double temperature = 1.0);

struct Nucleus {
  std::vector<TokenId> ids;     // descending probability, ties by lower id
  std::vector<double> probs;    // renormalized over the retained set
};

// Smallest prefix of the sorted distribution whose cumulative probability
// reaches p; the token that crosses the threshold is kept.
Nucleus nucleus(std::span<const float> logits, double temperature, double p);

// Inverse-CDF draw from the nucleus with u in [0, 1).
TokenId sample_from(const Nucleus& n, double u);

TokenId sample_token(std::span<const float> logits, double temperature, double p, Rng& rng);

// Highest logit; ties go to the lower id.
TokenId argmax(std::span<const float> logits);

}  // namespace stylescope
