#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/model.hpp"
#include "ctxscope/tensor.hpp"

namespace ctxscope {

// Next-token training example: inputs[t] predicts targets[t]; loss_mask[t]
// selects which targets contribute.
struct Example {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<bool> loss_mask;
  bool truncated = false;
};

// Renders the conversation, right-truncates to `truncate_len` tokens and masks
// every target that belongs to an assistant response, including the assistant
// suffix so the model learns where a response stops.
Example make_example(const Conversation& conv, const TemplateSpec& tmpl,
                     const TokenizerSpec& tok, std::size_t truncate_len);

// Mean cross-entropy over masked positions. Throws EmptyLossMask.
double loss_sft(const Tensor& logits, std::span<const TokenId> targets,
                const std::vector<bool>& loss_mask);

// Mean of per-example losses; gradients of that mean are accumulated into
// `grads` (which must have the weights' shapes and is not cleared).
double loss_and_grad(const ModelWeights& weights,
                     const std::vector<Example>& batch, ModelWeights& grads);

ModelWeights grad(const ModelWeights& weights, const std::vector<Example>& batch);

// Mean loss without gradients.
double batch_loss(const ModelWeights& weights, const std::vector<Example>& batch);

struct TrainConfig {
  double lr = 2e-3;
  // Unset means one pass over the corpus.
  std::optional<std::size_t> steps;
  std::size_t batch_size = 4;
  double clip = 1.0;  // global gradient-norm bound, <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;  // batch order

  void validate() const;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<double> loss_trace;  // batch loss before each update
};

// Adam on loss_sft. Starts from `init` when given, otherwise from
// ModelWeights::init(model). Throws EmptyCorpus.
TrainResult train(const std::vector<Example>& corpus, const ModelConfig& model,
                  const TrainConfig& config,
                  const ModelWeights* init = nullptr);

void write_loss_trace(const std::string& path, const std::vector<double>& trace);

}  // namespace ctxscope
