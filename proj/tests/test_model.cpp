#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxscope/error.hpp"
#include "ctxscope/model.hpp"
#include "ctxscope/steering.hpp"
#include "support/random.hpp"
#include "support/reference_model.hpp"

using namespace ctxscope;

namespace {

ModelConfig tiny(int layers, int heads, int d, std::uint64_t seed = 1) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d;
  c.vocab_size = 40;
  c.max_seq_len = 32;
  c.rng_seed = seed;
  return c;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-12);
}

}  // namespace

TEST_CASE("config validation rejects inconsistent shapes") {
  ModelConfig c = tiny(1, 3, 16);
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny(1, 2, 6);  // odd head width under rotary
  CHECK_THROWS_AS(c.validate(), Error);
  c.positional = PositionalScheme::Learned;
  CHECK_NOTHROW(c.validate());
  const ModelConfig round = ModelConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());
}

TEST_CASE("init is deterministic per seed and uses unit norm gains") {
  const auto a = ModelWeights::init(tiny(2, 2, 16, 5));
  const auto b = ModelWeights::init(tiny(2, 2, 16, 5));
  const auto c = ModelWeights::init(tiny(2, 2, 16, 6));
  CHECK(a.tok_embed.data == b.tok_embed.data);
  CHECK(a.tok_embed.data != c.tok_embed.data);
  for (double g : a.layers[1].mlp_norm.data) CHECK(g == 1.0);
  CHECK(a.all_finite());
  CHECK(a.n_params() == 40 * 16 * 2 + 2 * (2 * 16 + 4 * 256 + 2 * 64 * 16) + 16);
}

TEST_CASE("forward matches the reference reimplementation") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig cfg = tiny(1 + trial % 3, trial % 2 ? 2 : 4, 16, trial + 1);
    if (trial % 3 == 2) cfg.positional = PositionalScheme::Learned;
    const auto w = testutil::random_weights(cfg, 100 + trial, 0.3);
    const auto tokens = testutil::random_tokens(rng, 5 + trial * 3, cfg.vocab_size);
    const auto got = forward(tokens, w, true);
    const auto want = ref::forward(tokens, w);
    for (std::size_t t = 0; t < tokens.size(); ++t)
      for (int v = 0; v < cfg.vocab_size; ++v)
        CHECK(rel_err(got.logits(t, v), want.logits[t][v]) < 1e-9);
    for (int l = 0; l < cfg.n_layers; ++l)
      for (int h = 0; h < cfg.n_heads; ++h)
        for (std::size_t q = 0; q < tokens.size(); ++q)
          for (std::size_t k = 0; k < tokens.size(); ++k)
            CHECK(std::abs(got.attention->at(l, h, q, k) - want.attention[l][h][q][k]) < 1e-12);
  }
}

TEST_CASE("single token attends to itself") {
  const auto w = ModelWeights::init(tiny(2, 2, 8));
  const std::vector<TokenId> one{7};
  const auto r = forward(one, w, true);
  for (int l = 0; l < 2; ++l)
    for (int h = 0; h < 2; ++h) CHECK(r.attention->at(l, h, 0, 0) == 1.0);
}

TEST_CASE("zeroed query and key projections give uniform rows") {
  auto w = ModelWeights::init(tiny(1, 2, 8));
  w.layers[0].wq.zero();
  w.layers[0].wk.zero();
  const std::vector<TokenId> two{9, 9};
  const auto r = forward(two, w, true);
  CHECK(r.attention->at(0, 0, 1, 0) == 0.5);
  CHECK(r.attention->at(0, 1, 1, 1) == 0.5);
}

TEST_CASE("captured attention is causal and row-stochastic") {
  std::mt19937_64 rng(5);
  const auto cfg = tiny(2, 4, 16);
  const auto w = testutil::random_weights(cfg, 9, 0.5);
  const auto tokens = testutil::random_tokens(rng, 20, cfg.vocab_size);
  const auto r = forward(tokens, w, true);
  for (int l = 0; l < 2; ++l)
    for (int h = 0; h < 4; ++h)
      for (std::size_t q = 0; q < 20; ++q) {
        double s = 0.0;
        for (std::size_t k = 0; k < 20; ++k) {
          const double a = r.attention->at(l, h, q, k);
          if (k > q) CHECK(a == 0.0);
          else CHECK(a > 0.0);
          s += a;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
}

TEST_CASE("forward rejects long sequences and unknown ids") {
  const auto w = ModelWeights::init(tiny(1, 2, 8));
  std::vector<TokenId> long_seq(33, 1);
  try {
    forward(long_seq, w, false);
    FAIL("expected SequenceTooLong");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SequenceTooLong);
  }
  const std::vector<TokenId> bad{1, 40};
  try {
    forward(bad, w, false);
    FAIL("expected TokenOutOfVocab");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TokenOutOfVocab);
  }
}

TEST_CASE("steering with alpha 1 is bit-identical to no steering") {
  std::mt19937_64 rng(8);
  const auto cfg = tiny(2, 2, 16);
  const auto w = testutil::random_weights(cfg, 3, 0.4);
  const auto tokens = testutil::random_tokens(rng, 12, cfg.vocab_size);
  SteeringSpec s;
  s.alpha = 1.0;
  s.targets = {{0, 1}, {1, 0}};
  s.user_mask.assign(12, false);
  for (int i = 3; i < 8; ++i) s.user_mask[i] = true;
  const auto a = forward(tokens, w, false);
  const auto b = forward(tokens, w, false, &s);
  CHECK(a.logits.data == b.logits.data);
}

TEST_CASE("steered rows equal steer_row of the unsteered rows") {
  std::mt19937_64 rng(9);
  const auto cfg = tiny(2, 2, 16);
  const auto w = testutil::random_weights(cfg, 4, 0.4);
  const auto tokens = testutil::random_tokens(rng, 10, cfg.vocab_size);
  SteeringSpec s;
  s.alpha = 0.3;
  s.targets = {{0, 1}};
  s.user_mask = {false, true, true, true, false, false, true, true};  // shorter than T
  const auto plain = forward(tokens, w, true);
  const auto steered = forward(tokens, w, true, &s);
  for (std::size_t q = 0; q < 10; ++q) {
    std::vector<double> row(plain.attention->row(0, 1, q).begin(),
                            plain.attention->row(0, 1, q).begin() + q + 1);
    std::vector<bool> mask(q + 1, false);
    for (std::size_t k = 0; k <= q; ++k) mask[k] = k < s.user_mask.size() && s.user_mask[k];
    const auto want = steer_row(row, mask, 0.3);
    for (std::size_t k = 0; k <= q; ++k)
      CHECK(std::abs(steered.attention->at(0, 1, q, k) - want[k]) < 1e-15);
    // the other head of the same layer is untouched
    for (std::size_t k = 0; k <= q; ++k)
      CHECK(steered.attention->at(0, 0, q, k) == plain.attention->at(0, 0, q, k));
  }
  CHECK(plain.logits.data != steered.logits.data);
}

TEST_CASE("steering spec validation") {
  const auto cfg = tiny(2, 2, 16);
  SteeringSpec s;
  s.alpha = 0.0;
  CHECK_THROWS_AS(s.validate(cfg), Error);
  s.alpha = 0.5;
  s.targets = {{2, 0}};
  CHECK_THROWS_AS(s.validate(cfg), Error);
  s.targets = {{1, 1}};
  CHECK_NOTHROW(s.validate(cfg));
}

TEST_CASE("greedy generation") {
  const auto cfg = tiny(2, 2, 16);
  const auto w = testutil::random_weights(cfg, 12, 0.5);
  const std::vector<TokenId> prompt{0, 10, 11, 12};
  CHECK(generate(w, prompt, 0, 1).empty());
  const auto a = generate(w, prompt, 8, 1);
  const auto b = generate(w, prompt, 8, 1);
  CHECK(a == b);
  CHECK(a.size() <= 8);
  // each emitted token is the argmax of the forward pass over the prefix
  std::vector<TokenId> seq = prompt;
  for (TokenId t : a) {
    const auto r = forward(seq, w, false);
    const auto last = r.logits.row(seq.size() - 1);
    CHECK(std::max_element(last.begin(), last.end()) - last.begin() == t);
    seq.push_back(t);
  }
  CHECK_THROWS_AS(generate(w, prompt, 29, 1), Error);
}

TEST_CASE("cached decoding matches recomputing the full forward") {
  for (const auto pos : {PositionalScheme::Rotary, PositionalScheme::Learned}) {
    for (const bool steer : {false, true}) {
      auto cfg = tiny(2, 2, 16, 5);
      cfg.positional = pos;
      const auto w = testutil::random_weights(cfg, 21, 0.8);
      const std::vector<TokenId> prompt{0, 10, 11, 12, 13, 2};
      SteeringSpec s;
      s.alpha = 0.2;
      s.targets = {{0, 1}, {1, 0}};
      s.user_mask = {false, true, true, true, true, false};
      const SteeringSpec* sp = steer ? &s : nullptr;
      const std::size_t n_new = 32 - prompt.size();
      const auto got = generate(w, prompt, n_new, -1, sp);
      REQUIRE(got.size() == n_new);
      std::vector<TokenId> seq = prompt;
      for (TokenId t : got) {
        const auto r = forward(seq, w, false, sp);
        const auto last = r.logits.row(seq.size() - 1);
        CHECK(std::max_element(last.begin(), last.end()) - last.begin() == t);
        seq.push_back(t);
      }
    }
  }
}
