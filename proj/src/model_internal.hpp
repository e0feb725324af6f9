#pragma once

#include <vector>

#include "ctxscope/model.hpp"

namespace ctxscope::detail {

struct LayerCache {
  Tensor x_in;  // residual stream entering the block
  Tensor h1;  // attn_norm(x_in)
  std::vector<double> inv_rms1;
  Tensor q, k, v;  // q and k after rotary
  std::vector<double> probs;  // [head][q][k]
  Tensor mix;  // attention output before wo
  Tensor x_mid;  // residual after attention
  Tensor h2;
  std::vector<double> inv_rms2;
  Tensor up;  // pre-activation
  Tensor act;  // gelu(up)
};

struct ForwardCache {
  std::vector<TokenId> tokens;
  std::vector<LayerCache> layers;
  Tensor x_final;
  Tensor hf;
  std::vector<double> inv_rmsf;
  Tensor logits;
};

// Full forward keeping every activation needed by backward().
void forward_cached(std::span<const TokenId> tokens, const ModelWeights& w,
                    ForwardCache& cache, const SteeringSpec* steering);

// Accumulates d(loss)/d(weights) into `grads` given d(loss)/d(logits).
void backward(const ForwardCache& cache, const Tensor& dlogits,
              const ModelWeights& w, ModelWeights& grads);

}  // namespace ctxscope::detail
