#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylescope/sampling.hpp"
#include "support.hpp"

using namespace stylescope;

namespace {

std::vector<float> random_logits(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> d(0.0f, 3.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("softmax sums to one and respects temperature") {
  const std::vector<float> logits = {1.0f, 2.0f, 3.0f};
  const auto p = softmax(logits);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  CHECK(p[2] / p[1] == doctest::Approx(std::exp(1.0)));
  const auto cold = softmax(logits, 0.5);
  CHECK(cold[2] / cold[1] == doctest::Approx(std::exp(2.0)));
  const std::vector<float> big = {1000.0f, 1000.0f};
  CHECK(softmax(big)[0] == doctest::Approx(0.5));
}

TEST_CASE("nucleus keeps the crossing token") {
  // probabilities 0.5, 0.3, 0.2 after normalization
  const std::vector<float> logits = {std::log(0.2f), std::log(0.5f), std::log(0.3f)};
  auto n = nucleus(logits, 1.0, 0.6);
  CHECK(n.ids == std::vector<TokenId>{1, 2});
  CHECK(n.probs[0] == doctest::Approx(0.625));
  n = nucleus(logits, 1.0, 0.5);
  CHECK(n.ids == std::vector<TokenId>{1});
  n = nucleus(logits, 1.0, 1.0);
  CHECK(n.ids.size() == 3);
  const std::vector<float> tied = {0.0f, 0.0f, 0.0f};
  CHECK(nucleus(tied, 1.0, 0.5).ids == std::vector<TokenId>{0, 1});
}

TEST_CASE("inverse CDF draws") {
  Nucleus n{{4, 7}, {0.25, 0.75}};
  CHECK(sample_from(n, 0.0) == 4);
  CHECK(sample_from(n, 0.2499) == 4);
  CHECK(sample_from(n, 0.25) == 7);
  CHECK(sample_from(n, 0.999999) == 7);
}

TEST_CASE("argmax takes the lowest id on ties") {
  const std::vector<float> v = {1.0f, 3.0f, 3.0f, 2.0f};
  CHECK(argmax(v) == 1);
}

TEST_CASE("every sample lies in the nucleus") {
  std::mt19937_64 gen(123);
  Rng rng(7);
  for (int step = 0; step < 2000; ++step) {
    const auto logits = random_logits(gen, 50);
    const double p = std::uniform_real_distribution<double>(0.05, 1.0)(gen);
    const double temp = std::uniform_real_distribution<double>(0.3, 2.0)(gen);
    const auto n = nucleus(logits, temp, p);
    const auto id = sample_token(logits, temp, p, rng);
    CHECK(std::find(n.ids.begin(), n.ids.end(), id) != n.ids.end());
    // the nucleus is minimal: dropping its last token falls below p
    const auto full = softmax(logits, temp);
    double kept = 0;
    for (std::size_t i = 0; i + 1 < n.ids.size(); ++i) kept += full[n.ids[i]];
    CHECK(kept < p);
  }
}

TEST_CASE("same seed, same sequence") {
  Rng a(99), b(99), c(100);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    differs |= x != c.uniform();
  }
  CHECK(differs);
}
