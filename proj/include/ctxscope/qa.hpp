#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/generator.hpp"

namespace ctxscope {

struct QaCase {
  std::string id;
  std::string context;
  std::string question;
  std::vector<std::string> answers;
};

// Lowercase, whitespace runs collapsed to one space, ends trimmed.
std::string normalize_answer(std::string_view text);

// 1 when any normalized answer occurs in the normalized response.
// Throws EmptyAnswerSet.
int containment(std::string_view response, const std::vector<std::string>& answers);

// Prefix through the first '.', '!' or '?' that is followed by whitespace or
// the end of the text; the whole text when there is none.
std::string truncate_first_sentence(std::string_view text);

// {context, question, answers: [...]} per line; ids default to the line number.
std::vector<QaCase> parse_qa_jsonl(std::string_view text);
std::string qa_to_jsonl(const std::vector<QaCase>& cases);

struct QaSetup {
  TemplateSpec tmpl;
  std::string format;  // {context} and {question} placeholders
  TokenizerSpec tok;
  bool indicator = false;
  std::size_t gen_len = 100;
};

struct QaResult {
  std::string id;
  int containment = 0;
  bool failed = false;
  std::string truncated_response;
};

struct QaReport {
  std::vector<QaResult> results;
  double mean_containment = 0.0;
  std::size_t failures = 0;

  std::string csv() const;
  nlohmann::json summary() const;
};

AnnotatedSequence render_qa_prompt(const QaCase& c, const QaSetup& setup);

// Throws EmptyCaseSet; over-long cases score 0 and are flagged.
QaReport run_qa(const TextGenerator& model, const std::vector<QaCase>& cases,
                const QaSetup& setup);

}  // namespace ctxscope
