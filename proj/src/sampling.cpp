#include "stylescope/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylescope/error.hpp"

namespace stylescope {

std::vector<double> softmax(std::span<const float> logits, double temperature) {
  if (logits.empty()) throw EmptySample("softmax of empty logits");
  if (!(temperature > 0)) throw InvalidIntervention("temperature must be positive");
  double hi = -INFINITY;
  for (float l : logits) hi = std::max(hi, static_cast<double>(l));
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((static_cast<double>(logits[i]) - hi) / temperature);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Nucleus nucleus(std::span<const float> logits, double temperature, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidIntervention("nucleus p must lie in (0, 1]");
  const std::vector<double> probs = softmax(logits, temperature);
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });

  Nucleus n;
  double cum = 0.0;
  for (TokenId id : order) {
    n.ids.push_back(id);
    n.probs.push_back(probs[id]);
    cum += probs[id];
    // p = 1 keeps the whole vocabulary even if rounding leaves cum < 1.
    if (p < 1.0 && cum >= p) break;
  }
  for (double& v : n.probs) v /= cum;
  return n;
}

TokenId sample_from(const Nucleus& n, double u) {
  if (n.ids.empty()) throw EmptySample("empty nucleus");
  double cum = 0.0;
  for (std::size_t i = 0; i < n.ids.size(); ++i) {
    cum += n.probs[i];
    if (u < cum) return n.ids[i];
  }
  return n.ids.back();
}

TokenId sample_token(std::span<const float> logits, double temperature, double p, Rng& rng) {
  return sample_from(nucleus(logits, temperature, p), rng.uniform());
}

TokenId argmax(std::span<const float> logits) {
  if (logits.empty()) throw EmptySample("argmax of empty logits");
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace stylescope
