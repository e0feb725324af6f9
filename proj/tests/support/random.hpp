#pragma once

#include <random>
#include <vector>

#include "ctxscope/model.hpp"

namespace testutil {

inline std::vector<ctxscope::TokenId> random_tokens(std::mt19937_64& rng,
                                                    std::size_t n, int vocab) {
  std::uniform_int_distribution<int> dist(0, vocab - 1);
  std::vector<ctxscope::TokenId> out(n);
  for (auto& t : out) t = dist(rng);
  return out;
}

// Weights with larger-than-init entries so attention is far from uniform.
inline ctxscope::ModelWeights random_weights(const ctxscope::ModelConfig& cfg,
                                             std::uint64_t seed, double scale) {
  ctxscope::ModelWeights w = ctxscope::ModelWeights::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::uniform_real_distribution<double> gain(0.5, 1.5);
  w.for_each([&](const std::string& name, ctxscope::Tensor& t) {
    const bool is_norm = name.size() >= 4 && name.substr(name.size() - 4) == "norm";
    for (double& v : t.data) v = is_norm ? gain(rng) : dist(rng);
  });
  return w;
}

inline std::vector<double> random_stochastic_row(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> row(n);
  double s = 0.0;
  for (auto& v : row) s += (v = u(rng));
  for (auto& v : row) v /= s;
  return row;
}

// Causal record whose rows are random distributions over keys k <= q.
inline ctxscope::AttentionRecord random_record(std::mt19937_64& rng, int layers, int heads,
                                               std::size_t T) {
  ctxscope::AttentionRecord rec(layers, heads, T);
  for (int l = 0; l < layers; ++l) {
    for (int h = 0; h < heads; ++h) {
      for (std::size_t q = 0; q < T; ++q) {
        const auto row = random_stochastic_row(rng, q + 1);
        for (std::size_t k = 0; k <= q; ++k) rec.at(l, h, q, k) = row[k];
      }
    }
  }
  return rec;
}

inline std::vector<bool> random_mask(std::mt19937_64& rng, std::size_t n, double p = 0.5) {
  std::bernoulli_distribution b(p);
  std::vector<bool> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = b(rng);
  return m;
}

}  // namespace testutil
