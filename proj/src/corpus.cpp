#include "ctxscope/corpus.hpp"

#include <algorithm>
#include <cctype>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"

namespace ctxscope {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_refusal(const std::string& text, const std::vector<std::string>& phrases) {
  const std::string t = lower(text);
  return std::any_of(phrases.begin(), phrases.end(), [&t](const std::string& p) {
    return !p.empty() && t.find(lower(p)) != std::string::npos;
  });
}

double mean(double total, std::size_t n) {
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

}  // namespace

ParsedCorpus parse_corpus_jsonl(std::string_view text) {
  ParsedCorpus out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      Conversation conv;
      conv.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                       : j.at("id").dump();
      for (const auto& m : j.at("messages")) {
        const auto role = m.at("role").get<std::string>();
        if (role == "system") {
          ++out.n_system_dropped;
          continue;
        }
        Turn t;
        if (role == "user") {
          t.speaker = Speaker::User;
        } else if (role == "assistant") {
          t.speaker = Speaker::Assistant;
        } else {
          fail(ErrorKind::ParseError, where + "unknown role '" + role + "'");
        }
        t.text = m.at("content").get<std::string>();
        t.indicator = m.value("indicator", false);
        conv.turns.push_back(std::move(t));
      }
      for (const auto& [k, v] : j.items()) {
        if (k != "id" && k != "messages") conv.extra[k] = v;
      }
      out.conversations.push_back(std::move(conv));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, where + e.what());
    }
  }
  return out;
}

ParsedCorpus read_corpus(const std::string& path) {
  try {
    return parse_corpus_jsonl(read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) {
      fail(ErrorKind::ParseError, path + ": " + e.what());
    }
    throw;
  }
}

std::string corpus_to_jsonl(const std::vector<Conversation>& corpus) {
  std::string out;
  for (const auto& conv : corpus) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& t : conv.turns) {
      nlohmann::json m{{"role", t.speaker == Speaker::User ? "user" : "assistant"},
                       {"content", t.text}};
      if (t.indicator) m["indicator"] = true;
      msgs.push_back(std::move(m));
    }
    nlohmann::json j{{"id", conv.id}, {"messages", std::move(msgs)}};
    for (const auto& [k, v] : conv.extra.items()) j[k] = v;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_corpus(const std::string& path, const std::vector<Conversation>& corpus) {
  write_file(path, corpus_to_jsonl(corpus));
}

std::vector<std::string> default_refusal_phrases() {
  return {"I'm sorry, but I cannot",
          "I'm sorry, but I can't",
          "I cannot fulfill",
          "I can't assist with",
          "I am unable to help",
          "As an AI language model, I cannot"};
}

Preprocessed preprocess(const std::vector<Conversation>& raw,
                        const PreprocessOptions& options) {
  Preprocessed out;
  PreprocessStats& st = out.stats;
  st.n_input = raw.size();
  const TokenizerSpec tok = TokenizerSpec::standard();

  for (const Conversation& conv : raw) {
    std::vector<Turn> kept;
    for (const Turn& t : conv.turns) {
      if (t.speaker == Speaker::User) {
        if (!kept.empty() && kept.back().speaker == Speaker::User) {
          kept.pop_back();
          ++st.n_unpaired_dropped;
        }
        kept.push_back(t);
        continue;
      }
      if (kept.empty() || kept.back().speaker == Speaker::Assistant) {
        ++st.n_leading_dropped;
        continue;
      }
      if (is_refusal(t.text, options.refusal_phrases)) {
        kept.pop_back();
        ++st.n_refusals_dropped;
        continue;
      }
      Turn a = t;
      a.indicator = false;
      kept.push_back(std::move(a));
    }
    if (!kept.empty() && kept.back().speaker == Speaker::User) {
      kept.pop_back();
      ++st.n_unpaired_dropped;
    }
    if (kept.empty()) {
      ++st.n_empty_dropped;
      continue;
    }
    Conversation clean = conv;
    clean.turns = std::move(kept);
    if (render(clean, options.tmpl, tok, false).size() > options.truncate_len) {
      ++st.n_truncated;
    }
    out.corpus.push_back(std::move(clean));
  }
  st.output = dataset_stats(out.corpus, options.tmpl, tok);
  return out;
}

DatasetStats dataset_stats(const std::vector<Conversation>& corpus,
                           const TemplateSpec& tmpl, const TokenizerSpec& tok) {
  DatasetStats s;
  s.n_conversations = corpus.size();
  double instr = 0.0, resp = 0.0, conv_len = 0.0;
  std::size_t n_resp = 0;
  for (const auto& conv : corpus) {
    for (const auto& t : conv.turns) {
      if (t.speaker == Speaker::User) {
        ++s.n_instructions;
        instr += static_cast<double>(tokenize(t.text, tok).size());
      } else {
        ++n_resp;
        resp += static_cast<double>(tokenize(t.text, tok).size());
      }
    }
    conv_len += static_cast<double>(render(conv, tmpl, tok, false).size());
  }
  s.avg_turns = mean(static_cast<double>(s.n_instructions), s.n_conversations);
  s.avg_instruction_len = mean(instr, s.n_instructions);
  s.avg_response_len = mean(resp, n_resp);
  s.avg_conversation_len = mean(conv_len, s.n_conversations);
  return s;
}

nlohmann::json DatasetStats::to_json() const {
  return {{"n_conversations", n_conversations},
          {"n_instructions", n_instructions},
          {"avg_turns", avg_turns},
          {"avg_instruction_len", avg_instruction_len},
          {"avg_response_len", avg_response_len},
          {"avg_conversation_len", avg_conversation_len}};
}

nlohmann::json PreprocessStats::to_json() const {
  return {{"n_input", n_input},
          {"n_system_dropped", n_system_dropped},
          {"n_refusals_dropped", n_refusals_dropped},
          {"n_leading_dropped", n_leading_dropped},
          {"n_unpaired_dropped", n_unpaired_dropped},
          {"n_empty_dropped", n_empty_dropped},
          {"n_truncated", n_truncated},
          {"output", output.to_json()}};
}

std::vector<HistogramRow> instruction_histogram(
    const std::vector<Conversation>& corpus, std::size_t bin_width) {
  if (bin_width == 0) fail(ErrorKind::InvalidArgument, "bin width must be >= 1");
  std::vector<HistogramRow> rows;
  for (const auto& conv : corpus) {
    for (const auto& t : conv.turns) {
      if (t.speaker != Speaker::User) continue;
      // One byte per token, so the byte length is the token length.
      const std::size_t bin = t.text.size() / bin_width;
      while (rows.size() <= bin) {
        const std::size_t k = rows.size();
        rows.push_back({k * bin_width, (k + 1) * bin_width, 0, 0});
      }
      ++rows[bin].original;
      if (t.indicator) ++rows[bin].annotated;
    }
  }
  return rows;
}

std::string histogram_csv(const std::vector<HistogramRow>& rows) {
  std::string out = "bin_start,bin_end,original,annotated\n";
  for (const auto& r : rows) {
    out += std::to_string(r.bin_start) + ',' + std::to_string(r.bin_end) + ',' +
           std::to_string(r.original) + ',' + std::to_string(r.annotated) + '\n';
  }
  return out;
}

}  // namespace ctxscope
