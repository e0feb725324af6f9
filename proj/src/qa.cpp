#include "ctxscope/qa.hpp"

#include <cctype>
#include <exception>
#include <sstream>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"
#include "ctxscope/prompts.hpp"

namespace ctxscope {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

int containment(std::string_view response, const std::vector<std::string>& answers) {
  if (answers.empty()) fail(ErrorKind::EmptyAnswerSet, "no reference answers");
  const std::string r = normalize_answer(response);
  for (const auto& a : answers) {
    if (r.find(normalize_answer(a)) != std::string::npos) return 1;
  }
  return 0;
}

std::string truncate_first_sentence(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 == text.size() || is_space(text[i + 1])) {
      return std::string(text.substr(0, i + 1));
    }
  }
  return std::string(text);
}

std::vector<QaCase> parse_qa_jsonl(std::string_view text) {
  std::vector<QaCase> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QaCase c;
      c.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>()
                                                     : j["id"].dump())
                              : std::to_string(line_no);
      c.context = j.at("context").get<std::string>();
      c.question = j.at("question").get<std::string>();
      c.answers = j.at("answers").get<std::vector<std::string>>();
      if (c.answers.empty()) {
        fail(ErrorKind::EmptyAnswerSet, "line " + std::to_string(line_no) + ": no answers");
      }
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string qa_to_jsonl(const std::vector<QaCase>& cases) {
  std::string out;
  for (const auto& c : cases) {
    out += nlohmann::json{{"id", c.id},
                          {"context", c.context},
                          {"question", c.question},
                          {"answers", c.answers}}
               .dump();
    out += '\n';
  }
  return out;
}

AnnotatedSequence render_qa_prompt(const QaCase& c, const QaSetup& setup) {
  Conversation conv;
  conv.id = c.id;
  conv.turns.push_back(
      {Speaker::User, fill_prompt(setup.format, c.context, c.question), setup.indicator});
  return render(conv, setup.tmpl, setup.tok, false);
}

QaReport run_qa(const TextGenerator& model, const std::vector<QaCase>& cases,
                const QaSetup& setup) {
  if (cases.empty()) fail(ErrorKind::EmptyCaseSet, "no QA cases");
  QaReport report;
  report.results.resize(cases.size());
  std::vector<std::exception_ptr> errors(cases.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < cases.size(); ++i) {
    QaResult& r = report.results[i];
    r.id = cases[i].id;
    try {
      const AnnotatedSequence prompt = render_qa_prompt(cases[i], setup);
      const auto out = model.generate(prompt, setup.gen_len, nullptr);
      r.truncated_response = truncate_first_sentence(detokenize(out, setup.tok));
      r.containment = containment(r.truncated_response, cases[i].answers);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SequenceTooLong) {
        r.failed = true;
      } else {
        errors[i] = std::current_exception();
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double total = 0.0;
  for (const auto& r : report.results) {
    total += r.containment;
    if (r.failed) ++report.failures;
  }
  report.mean_containment = total / static_cast<double>(report.results.size());
  return report;
}

std::string QaReport::csv() const {
  std::ostringstream out;
  out << "case_id,containment,truncated_response\n";
  for (const auto& r : results) {
    out << csv_quote(r.id) << ',' << r.containment << ','
        << csv_quote(r.truncated_response) << '\n';
  }
  return out.str();
}

nlohmann::json QaReport::summary() const {
  return {{"mean_containment", mean_containment},
          {"n_cases", results.size()},
          {"failures", failures}};
}

}  // namespace ctxscope
