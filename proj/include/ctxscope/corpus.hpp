#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/chat_template.hpp"

namespace ctxscope {

struct ParsedCorpus {
  std::vector<Conversation> conversations;
  std::size_t n_system_dropped = 0;
};

// One JSON object per line: {"id", "messages": [{"role", "content",
// "indicator"?}]}. Other top-level keys are kept in Conversation::extra.
// "system" messages are dropped and counted; any other unknown role, and any
// malformed line, throws ParseError naming the 1-based line number.
ParsedCorpus parse_corpus_jsonl(std::string_view text);
ParsedCorpus read_corpus(const std::string& path);

std::string corpus_to_jsonl(const std::vector<Conversation>& corpus);
void write_corpus(const std::string& path, const std::vector<Conversation>& corpus);

std::vector<std::string> default_refusal_phrases();

struct PreprocessOptions {
  std::vector<std::string> refusal_phrases = default_refusal_phrases();
  std::size_t truncate_len = 4096;
  TemplateSpec tmpl = TemplateSpec::null_template();
};

struct DatasetStats {
  std::size_t n_conversations = 0;
  std::size_t n_instructions = 0;
  double avg_turns = 0.0;  // instruction/response pairs per conversation
  double avg_instruction_len = 0.0;  // tokens
  double avg_response_len = 0.0;
  double avg_conversation_len = 0.0;  // rendered tokens

  nlohmann::json to_json() const;
};

struct PreprocessStats {
  std::size_t n_input = 0;
  std::size_t n_system_dropped = 0;
  std::size_t n_refusals_dropped = 0;  // refusal responses (paired user turns go too)
  std::size_t n_leading_dropped = 0;  // responses with no preceding instruction
  std::size_t n_unpaired_dropped = 0;  // instructions with no response
  std::size_t n_empty_dropped = 0;  // conversations left without a pair
  std::size_t n_truncated = 0;  // rendered length above truncate_len
  DatasetStats output;

  nlohmann::json to_json() const;
};

struct Preprocessed {
  std::vector<Conversation> corpus;
  PreprocessStats stats;
};

// Removes refusals with their instructions, leading and consecutive
// responses, unpaired instructions, and indicator flags on responses.
// Truncation itself happens when training examples are built; here it is
// only counted. Idempotent.
Preprocessed preprocess(const std::vector<Conversation>& raw,
                        const PreprocessOptions& options);

DatasetStats dataset_stats(const std::vector<Conversation>& corpus,
                           const TemplateSpec& tmpl, const TokenizerSpec& tok);

struct HistogramRow {
  std::size_t bin_start;
  std::size_t bin_end;  // exclusive
  std::size_t original;
  std::size_t annotated;
};

// Instruction token lengths in fixed-width bins; `annotated` counts the
// instructions carrying an indicator.
std::vector<HistogramRow> instruction_histogram(
    const std::vector<Conversation>& corpus, std::size_t bin_width);
std::string histogram_csv(const std::vector<HistogramRow>& rows);

}  // namespace ctxscope
