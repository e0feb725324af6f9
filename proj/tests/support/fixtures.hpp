#pragma once

#include <functional>

#include "ctxscope/error.hpp"
#include "ctxscope/generator.hpp"
#include "ctxscope/tokenizer.hpp"

namespace testutil {

// Generator whose continuation is computed from the prompt text and the
// steering strength (1.0 when unsteered).
class ScriptedGenerator : public ctxscope::TextGenerator {
 public:
  using Script = std::function<std::string(const std::string& prompt, double alpha)>;

  explicit ScriptedGenerator(Script script, std::size_t max_len = 1u << 20)
      : script_(std::move(script)), max_len_(max_len) {}

  std::vector<ctxscope::TokenId> generate(const ctxscope::AnnotatedSequence& prompt,
                                          std::size_t max_new,
                                          const ctxscope::SteeringSpec* steering) const override {
    if (prompt.size() + max_new > max_len_) {
      ctxscope::fail(ctxscope::ErrorKind::SequenceTooLong, "fixture window exceeded");
    }
    const std::string text = ctxscope::detokenize(prompt.tokens, tok_);
    auto ids = ctxscope::tokenize(script_(text, steering ? steering->alpha : 1.0), tok_);
    if (ids.size() > max_new) ids.resize(max_new);
    return ids;
  }
  std::size_t max_seq_len() const override { return max_len_; }

 private:
  Script script_;
  std::size_t max_len_;
  ctxscope::TokenizerSpec tok_;
};

}  // namespace testutil
