#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/tensor.hpp"
#include "ctxscope/tokenizer.hpp"

namespace ctxscope {

enum class PositionalScheme { Rotary, Learned };

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int vocab_size = 264;
  int max_seq_len = 512;
  int mlp_mult = 4;
  std::uint64_t rng_seed = 1;
  PositionalScheme positional = PositionalScheme::Rotary;
  double rope_base = 10000.0;
  double norm_eps = 1e-6;
  double init_std = 0.02;

  int d_head() const { return d_model / n_heads; }
  int d_mlp() const { return d_model * mlp_mult; }
  // Throws InvalidArgument on inconsistent shapes.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Pre-norm decoder block: RMSNorm -> causal MHA -> residual, RMSNorm ->
// GELU MLP -> residual. Bias-free linear layers, untied unembedding.
struct LayerWeights {
  Tensor attn_norm;  // 1 x d
  Tensor wq, wk, wv, wo;  // d x d
  Tensor mlp_norm;  // 1 x d
  Tensor w_up;  // d_mlp x d
  Tensor w_down;  // d x d_mlp
};

struct ModelWeights {
  ModelConfig config;
  Tensor tok_embed;  // vocab x d
  Tensor pos_embed;  // max_seq_len x d, only for PositionalScheme::Learned
  std::vector<LayerWeights> layers;
  Tensor final_norm;  // 1 x d
  Tensor unembed;  // vocab x d

  // Deterministic initialization from config.rng_seed.
  static ModelWeights init(const ModelConfig& config);
  // Same shapes as `config`, every entry zero.
  static ModelWeights zeros(const ModelConfig& config);

  // Visits every parameter tensor in a fixed order with a stable name.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::size_t n_params() const;
  bool all_finite() const;
};

// Captured post-softmax (and post-steering) attention, [layer][head][q][k].
class AttentionRecord {
 public:
  AttentionRecord() = default;
  AttentionRecord(int n_layers, int n_heads, std::size_t seq_len);

  int n_layers() const { return n_layers_; }
  int n_heads() const { return n_heads_; }
  std::size_t seq_len() const { return seq_len_; }

  double at(int layer, int head, std::size_t q, std::size_t k) const {
    return data_[offset(layer, head) + q * seq_len_ + k];
  }
  double& at(int layer, int head, std::size_t q, std::size_t k) {
    return data_[offset(layer, head) + q * seq_len_ + k];
  }
  std::span<const double> row(int layer, int head, std::size_t q) const {
    return {data_.data() + offset(layer, head) + q * seq_len_, seq_len_};
  }
  std::span<double> row(int layer, int head, std::size_t q) {
    return {data_.data() + offset(layer, head) + q * seq_len_, seq_len_};
  }
  // All heads of one layer, [head][q][k].
  std::span<double> layer(int layer) {
    return {data_.data() + offset(layer, 0),
            static_cast<std::size_t>(n_heads_) * seq_len_ * seq_len_};
  }

 private:
  std::size_t offset(int layer, int head) const {
    return (static_cast<std::size_t>(layer) * n_heads_ + head) * seq_len_ *
           seq_len_;
  }

  int n_layers_ = 0;
  int n_heads_ = 0;
  std::size_t seq_len_ = 0;
  std::vector<double> data_;
};

// Post-softmax reweighting of selected heads toward user key positions.
// Positions beyond user_mask.size() count as non-user.
struct SteeringSpec {
  double alpha = 1.0;
  std::vector<std::pair<int, int>> targets;  // (layer, head)
  std::vector<bool> user_mask;

  void validate(const ModelConfig& config) const;
};

struct ForwardResult {
  Tensor logits;  // positions x vocab
  std::optional<AttentionRecord> attention;
};

// Throws SequenceTooLong / TokenOutOfVocab.
ForwardResult forward(std::span<const TokenId> tokens,
                      const ModelWeights& weights, bool capture_attention,
                      const SteeringSpec* steering = nullptr);

// Greedy decoding; stops after emitting `eos` (not included in the output)
// or after max_new_tokens.
std::vector<TokenId> generate(const ModelWeights& weights,
                              std::span<const TokenId> prompt,
                              std::size_t max_new_tokens, TokenId eos,
                              const SteeringSpec* steering = nullptr);

}  // namespace ctxscope
