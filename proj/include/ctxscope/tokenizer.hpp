#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxscope {

using TokenId = std::int32_t;

// Byte-level vocabulary: special tokens occupy ids [0, n_special), byte b
// maps to n_special + b. Special tokens are spelled "<|NAME|>" in template
// literals and in detokenized output.
class TokenizerSpec {
 public:
  // BOS, EOS, USER_MARK, ASSISTANT_MARK, IND, PAD followed by `n_reserved`
  // RESERVED_i slots.
  explicit TokenizerSpec(std::size_t n_reserved = 2);

  static TokenizerSpec standard() { return TokenizerSpec(2); }

  std::size_t n_special() const { return names_.size(); }
  TokenId byte_offset() const { return static_cast<TokenId>(names_.size()); }
  std::size_t vocab_size() const { return names_.size() + 256; }
  const std::vector<std::string>& special_names() const { return names_; }

  TokenId bos() const { return 0; }
  TokenId eos() const { return 1; }
  TokenId user_mark() const { return 2; }
  TokenId assistant_mark() const { return 3; }
  TokenId indicator() const { return 4; }
  TokenId pad() const { return 5; }

  bool is_special(TokenId id) const {
    return id >= 0 && id < byte_offset();
  }
  std::optional<TokenId> special_id(std::string_view name) const;
  // "<|NAME|>"
  std::string special_literal(TokenId id) const;

 private:
  std::vector<std::string> names_;
};

// One token per byte; never produces special ids.
std::vector<TokenId> tokenize(std::string_view text, const TokenizerSpec& spec);

// Inverse of tokenize; special ids are rendered as their "<|NAME|>" literal.
std::string detokenize(std::span<const TokenId> tokens,
                       const TokenizerSpec& spec);

// Like tokenize, but "<|NAME|>" escapes naming a special token become that
// token. Used for template literals only, never for user-supplied text.
std::vector<TokenId> encode_literal(std::string_view text,
                                    const TokenizerSpec& spec);

}  // namespace ctxscope
