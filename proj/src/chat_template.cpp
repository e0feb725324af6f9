#include "ctxscope/chat_template.hpp"

#include "ctxscope/error.hpp"

namespace ctxscope {

const char* to_string(Role role) {
  switch (role) {
    case Role::Bos: return "BOS";
    case Role::Template: return "TEMPLATE";
    case Role::User: return "USER";
    case Role::Assistant: return "ASSISTANT";
    case Role::Indicator: return "INDICATOR";
    case Role::ResponsePrefix: return "RESPONSE_PREFIX";
  }
  return "?";
}

TemplateSpec TemplateSpec::null_template() {
  TemplateSpec t;
  t.name = "null";
  return t;
}

TemplateSpec TemplateSpec::from_json(const nlohmann::json& j) {
  TemplateSpec t;
  t.name = j.value("name", std::string{});
  t.bos_text = j.value("bos_text", std::string{"<|BOS|>"});
  t.user_prefix = j.value("user_prefix", std::string{});
  t.user_suffix = j.value("user_suffix", std::string{});
  t.assistant_prefix = j.value("assistant_prefix", std::string{});
  t.assistant_suffix = j.value("assistant_suffix", std::string{});
  t.response_prefix = j.value("response_prefix", std::string{});
  return t;
}

nlohmann::json TemplateSpec::to_json() const {
  return {{"name", name},
          {"bos_text", bos_text},
          {"user_prefix", user_prefix},
          {"user_suffix", user_suffix},
          {"assistant_prefix", assistant_prefix},
          {"assistant_suffix", assistant_suffix},
          {"response_prefix", response_prefix}};
}

bool TemplateSpec::is_null() const {
  return user_prefix.empty() && user_suffix.empty() &&
         assistant_prefix.empty() && assistant_suffix.empty();
}

std::size_t Conversation::n_pairs() const {
  std::size_t n = 0;
  for (const auto& t : turns) {
    if (t.speaker == Speaker::User) ++n;
  }
  return n;
}

int AnnotatedSequence::max_turn() const {
  int m = -1;
  for (int t : turn_index) m = std::max(m, t);
  return m;
}

void AnnotatedSequence::append_generated(const std::vector<TokenId>& generated) {
  const int turn = std::max(max_turn(), 1);
  const std::size_t begin = tokens.size();
  for (TokenId t : generated) {
    tokens.push_back(t);
    roles.push_back(Role::Assistant);
    turn_index.push_back(turn);
  }
  if (!generated.empty()) {
    spans.push_back({SpanKind::AssistantText, turn, begin, tokens.size()});
  }
}

void validate_conversation(const Conversation& conv) {
  if (conv.turns.empty()) {
    fail(ErrorKind::MalformedConversation,
         "conversation '" + conv.id + "' has no turns");
  }
  for (std::size_t i = 0; i < conv.turns.size(); ++i) {
    const Turn& t = conv.turns[i];
    const Speaker expected = (i % 2 == 0) ? Speaker::User : Speaker::Assistant;
    if (t.speaker != expected) {
      fail(ErrorKind::MalformedConversation,
           "conversation '" + conv.id + "' turn " + std::to_string(i) +
               ": roles must alternate starting with user");
    }
    if (t.indicator && t.speaker != Speaker::User) {
      fail(ErrorKind::MalformedConversation,
           "conversation '" + conv.id + "' turn " + std::to_string(i) +
               ": indicator set on an assistant turn");
    }
  }
}

namespace {

class Builder {
 public:
  explicit Builder(const TokenizerSpec& tok) : tok_(tok) {}

  void literal(const std::string& text, Role role, SpanKind kind, int turn) {
    push(encode_literal(text, tok_), role, kind, turn);
  }
  void text(const std::string& text, Role role, SpanKind kind, int turn) {
    push(tokenize(text, tok_), role, kind, turn);
  }
  void token(TokenId id, Role role, SpanKind kind, int turn) {
    push({id}, role, kind, turn);
  }
  AnnotatedSequence take() { return std::move(seq_); }

 private:
  void push(const std::vector<TokenId>& ids, Role role, SpanKind kind,
            int turn) {
    if (ids.empty()) return;
    const std::size_t begin = seq_.tokens.size();
    const int tagged = (role == Role::Template || role == Role::Bos) ? -1 : turn;
    for (TokenId id : ids) {
      seq_.tokens.push_back(id);
      seq_.roles.push_back(role);
      seq_.turn_index.push_back(tagged);
    }
    seq_.spans.push_back({kind, tagged, begin, seq_.tokens.size()});
  }

  const TokenizerSpec& tok_;
  AnnotatedSequence seq_;
};

}  // namespace

AnnotatedSequence render(const Conversation& conv, const TemplateSpec& tmpl,
                         const TokenizerSpec& tok,
                         bool include_response_prefix) {
  validate_conversation(conv);
  Builder b(tok);
  b.literal(tmpl.bos_text, Role::Bos, SpanKind::Bos, -1);
  int pair = 0;
  for (const Turn& t : conv.turns) {
    if (t.speaker == Speaker::User) {
      ++pair;
      b.literal(tmpl.user_prefix, Role::Template, SpanKind::UserPrefix, pair);
      b.text(t.text, Role::User, SpanKind::UserText, pair);
      if (t.indicator) {
        b.token(tok.indicator(), Role::Indicator, SpanKind::Indicator, pair);
      }
      b.literal(tmpl.user_suffix, Role::Template, SpanKind::UserSuffix, pair);
    } else {
      b.literal(tmpl.assistant_prefix, Role::Template,
                SpanKind::AssistantPrefix, pair);
      b.text(t.text, Role::Assistant, SpanKind::AssistantText, pair);
      b.literal(tmpl.assistant_suffix, Role::Template,
                SpanKind::AssistantSuffix, pair);
    }
  }
  if (conv.turns.back().speaker == Speaker::User) {
    b.literal(tmpl.assistant_prefix, Role::Template, SpanKind::AssistantPrefix,
              pair);
    if (include_response_prefix) {
      b.literal(tmpl.response_prefix, Role::ResponsePrefix,
                SpanKind::ResponsePrefix, pair);
    }
  }
  return b.take();
}

std::string render_text(const Conversation& conv, const TemplateSpec& tmpl,
                        bool include_response_prefix) {
  validate_conversation(conv);
  std::string out = tmpl.bos_text;
  for (const Turn& t : conv.turns) {
    if (t.speaker == Speaker::User) {
      out += tmpl.user_prefix;
      out += t.text;
      if (t.indicator) out += "<|IND|>";
      out += tmpl.user_suffix;
    } else {
      out += tmpl.assistant_prefix;
      out += t.text;
      out += tmpl.assistant_suffix;
    }
  }
  if (conv.turns.back().speaker == Speaker::User) {
    out += tmpl.assistant_prefix;
    if (include_response_prefix) out += tmpl.response_prefix;
  }
  return out;
}

std::vector<bool> role_mask(const AnnotatedSequence& seq, RoleSet roles,
                            std::optional<int> up_to_turn) {
  std::vector<bool> mask(seq.size(), false);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!roles.contains(seq.roles[i])) continue;
    if (up_to_turn && seq.turn_index[i] > *up_to_turn) continue;
    mask[i] = true;
  }
  return mask;
}

Conversation prefix_pairs(const Conversation& conv, std::size_t n_pairs) {
  Conversation out;
  out.id = conv.id;
  out.extra = conv.extra;
  std::size_t pairs = 0;
  for (const Turn& t : conv.turns) {
    if (t.speaker == Speaker::User) {
      if (pairs == n_pairs) break;
      ++pairs;
    }
    out.turns.push_back(t);
  }
  return out;
}

}  // namespace ctxscope
