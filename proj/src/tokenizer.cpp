#include "ctxscope/tokenizer.hpp"

#include "ctxscope/error.hpp"

namespace ctxscope {

TokenizerSpec::TokenizerSpec(std::size_t n_reserved)
    : names_{"BOS", "EOS", "USER_MARK", "ASSISTANT_MARK", "IND", "PAD"} {
  for (std::size_t i = 0; i < n_reserved; ++i) {
    names_.push_back("RESERVED_" + std::to_string(i));
  }
}

std::optional<TokenId> TokenizerSpec::special_id(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<TokenId>(i);
  }
  return std::nullopt;
}

std::string TokenizerSpec::special_literal(TokenId id) const {
  if (!is_special(id)) {
    fail(ErrorKind::TokenOutOfVocab,
         "token " + std::to_string(id) + " is not a special token");
  }
  return "<|" + names_[static_cast<std::size_t>(id)] + "|>";
}

std::vector<TokenId> tokenize(std::string_view text, const TokenizerSpec& spec) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  const TokenId offset = spec.byte_offset();
  for (char c : text) {
    out.push_back(offset + static_cast<TokenId>(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string detokenize(std::span<const TokenId> tokens,
                       const TokenizerSpec& spec) {
  std::string out;
  out.reserve(tokens.size());
  const TokenId offset = spec.byte_offset();
  const auto vocab = static_cast<TokenId>(spec.vocab_size());
  for (TokenId t : tokens) {
    if (t < 0 || t >= vocab) {
      fail(ErrorKind::TokenOutOfVocab, "token id " + std::to_string(t) +
                                           " outside vocabulary of " +
                                           std::to_string(vocab));
    }
    if (t < offset) {
      out += spec.special_literal(t);
    } else {
      out.push_back(static_cast<char>(static_cast<unsigned char>(t - offset)));
    }
  }
  return out;
}

std::vector<TokenId> encode_literal(std::string_view text,
                                    const TokenizerSpec& spec) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, "<|") == 0) {
      const auto close = text.find("|>", i + 2);
      if (close != std::string_view::npos) {
        const auto id = spec.special_id(text.substr(i + 2, close - i - 2));
        if (id) {
          out.push_back(*id);
          i = close + 2;
          continue;
        }
      }
    }
    out.push_back(spec.byte_offset() +
                  static_cast<TokenId>(static_cast<unsigned char>(text[i])));
    ++i;
  }
  return out;
}

}  // namespace ctxscope
