#pragma once

#include <cstddef>
#include <vector>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/model.hpp"

namespace ctxscope {

// Anything that continues a rendered prompt. Evaluation harnesses take this
// interface so fixtures can stand in for a trained model.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;

  // Throws SequenceTooLong when prompt + max_new exceeds max_seq_len().
  virtual std::vector<TokenId> generate(const AnnotatedSequence& prompt,
                                        std::size_t max_new,
                                        const SteeringSpec* steering) const = 0;
  virtual std::size_t max_seq_len() const = 0;
};

class TransformerGenerator : public TextGenerator {
 public:
  TransformerGenerator(const ModelWeights& weights, TokenId eos)
      : weights_(weights), eos_(eos) {}

  std::vector<TokenId> generate(const AnnotatedSequence& prompt,
                                std::size_t max_new,
                                const SteeringSpec* steering) const override {
    return ctxscope::generate(weights_, prompt.tokens, max_new, eos_, steering);
  }
  std::size_t max_seq_len() const override {
    return static_cast<std::size_t>(weights_.config.max_seq_len);
  }
  const ModelWeights& weights() const { return weights_; }

 private:
  const ModelWeights& weights_;
  TokenId eos_;
};

}  // namespace ctxscope
