#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/tokenizer.hpp"

namespace ctxscope {

enum class Role : std::uint8_t {
  Bos,
  Template,
  User,
  Assistant,
  Indicator,
  ResponsePrefix,
};

const char* to_string(Role role);

class RoleSet {
 public:
  constexpr RoleSet() = default;
  constexpr RoleSet(std::initializer_list<Role> roles) {
    for (Role r : roles) bits_ |= bit(r);
  }
  constexpr bool contains(Role r) const { return (bits_ & bit(r)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }

 private:
  static constexpr std::uint8_t bit(Role r) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(r));
  }
  std::uint8_t bits_ = 0;
};

// Positions counted as "user input" by steering, head probing and
// dependency scoring.
inline constexpr RoleSet kUserRoles{Role::User, Role::Indicator};

// Fixed literals wrapping each turn. Literals may contain "<|NAME|>" special
// token escapes. The null template has every literal empty except bos_text.
struct TemplateSpec {
  std::string name;
  std::string bos_text = "<|BOS|>";
  std::string user_prefix;
  std::string user_suffix;
  std::string assistant_prefix;
  std::string assistant_suffix;
  std::string response_prefix;

  static TemplateSpec null_template();
  static TemplateSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // True when rendering emits no TEMPLATE-role tokens.
  bool is_null() const;
};

enum class Speaker : std::uint8_t { User, Assistant };

struct Turn {
  Speaker speaker = Speaker::User;
  std::string text;
  bool indicator = false;
};

struct Conversation {
  std::string id;
  std::vector<Turn> turns;
  // Extra top-level fields carried through JSONL round trips (e.g. species).
  nlohmann::json extra = nlohmann::json::object();

  std::size_t n_pairs() const;
};

enum class SpanKind : std::uint8_t {
  Bos,
  UserPrefix,
  UserText,
  Indicator,
  UserSuffix,
  AssistantPrefix,
  AssistantText,
  AssistantSuffix,
  ResponsePrefix,
};

struct Span {
  SpanKind kind;
  int turn;  // 1-based instruction/response pair, -1 for BOS
  std::size_t begin;
  std::size_t end;
};

// Token ids with a role class and turn number per position. Turn numbers
// are 1-based (X_m, Y_m) pair indices; BOS and template tokens carry -1.
struct AnnotatedSequence {
  std::vector<TokenId> tokens;
  std::vector<Role> roles;
  std::vector<int> turn_index;
  std::vector<Span> spans;

  std::size_t size() const { return tokens.size(); }
  int max_turn() const;
  // Appends generated tokens attributed to the assistant.
  void append_generated(const std::vector<TokenId>& generated);
};

// Throws MalformedConversation unless turns alternate starting with user and
// indicators appear on user turns only.
void validate_conversation(const Conversation& conv);

// Rendering order per pair: user_prefix, user text, [IND], user_suffix,
// assistant_prefix, assistant text, assistant_suffix. When the conversation
// ends on a user turn the assistant prefix is emitted as a generation prompt,
// followed by the response prefix if requested.
AnnotatedSequence render(const Conversation& conv, const TemplateSpec& tmpl,
                         const TokenizerSpec& tok,
                         bool include_response_prefix);

// Textual form of render(); detokenize(render(...).tokens) == render_text(...).
std::string render_text(const Conversation& conv, const TemplateSpec& tmpl,
                        bool include_response_prefix);

std::vector<bool> role_mask(const AnnotatedSequence& seq, RoleSet roles,
                            std::optional<int> up_to_turn = std::nullopt);

// Conversation truncated to its first `n_pairs` instruction/response pairs.
Conversation prefix_pairs(const Conversation& conv, std::size_t n_pairs);

}  // namespace ctxscope
