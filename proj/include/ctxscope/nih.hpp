#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/generator.hpp"
#include "ctxscope/steering.hpp"

namespace ctxscope {

struct Needle {
  std::string text = "The code for the silver gate is 4817.";
  std::string question = "What is the code for the silver gate?";
  std::vector<std::string> keywords{"4817"};
};

struct NihCase {
  std::size_t context_len = 0;  // context tokens before joining spaces
  double depth = 0.0;
  Needle needle;
  std::string template_id = "chat";
  bool response_prefix = false;
};

// Everything except the grid that a case needs to render.
struct NihSetup {
  std::string haystack;
  TemplateSpec tmpl;
  std::string format;  // user message with {context} and {question}
  TokenizerSpec tok;
  bool indicator = false;  // append the indicator token to the query
};

struct BuiltCase {
  std::string context;
  std::size_t needle_offset = 0;  // byte (= token) offset of the needle
  AnnotatedSequence prompt;
};

// The filler is the first context_len - |needle| haystack bytes; the needle
// goes in at floor(depth * (context_len - |needle|)), joined with one space
// on each side that has a neighbour. Throws HaystackTooShort.
BuiltCase build_case(const NihCase& c, const NihSetup& setup);

struct GridSpec {
  std::size_t min_len = 200;
  std::size_t max_len = 4000;
  std::size_t n_lens = 20;
  std::size_t n_depths = 20;
};

std::vector<std::size_t> grid_lengths(const GridSpec& g);
std::vector<double> grid_depths(const GridSpec& g);

// Length-major order. Throws InvalidGrid.
std::vector<NihCase> build_grid(const GridSpec& g, const NihCase& base);

// Fraction of keywords found as byte substrings of the detokenized first
// `window` output tokens. Throws EmptyKeywordSet.
double recall(std::span<const TokenId> output,
              const std::vector<std::string>& keywords,
              const TokenizerSpec& tok, std::size_t window = 100);

struct NihOptions {
  std::size_t gen_len = 50;
  std::size_t window = 100;
  // Steer the selected heads of every case with this alpha.
  std::optional<HeadSelection> selection;
  double alpha = 1.0;
};

struct NihCell {
  std::size_t context_len = 0;
  double depth = 0.0;
  double recall = 0.0;
  bool failed = false;
  std::string error;
  std::string output;
};

struct NihReport {
  std::vector<std::size_t> lengths;
  std::vector<double> depths;
  std::vector<NihCell> cells;  // same order as the input cases
  double mean_recall = 0.0;
  double mean_err = 1.0;
  std::size_t failures = 0;

  // Rows are depths, columns are context lengths.
  std::string heatmap_csv() const;
  std::string cases_csv() const;
  nlohmann::json summary() const;
};

// Cases that cannot be rendered or generated score 0 and are flagged.
NihReport run_nih(const TextGenerator& model, const std::vector<NihCase>& cases,
                  const NihSetup& setup, const NihOptions& options);

struct SweepRow {
  double alpha;
  double mean_recall;
  double mean_err;
};

struct SweepResult {
  double best_alpha = 1.0;
  std::vector<SweepRow> rows;  // ascending alpha

  std::string csv() const;
};

// Mean recall per distinct alpha; the best alpha maximizes it, preferring the
// larger alpha (weaker intervention) on ties.
SweepResult sweep_alpha(const TextGenerator& model,
                        const std::vector<NihCase>& cases, const NihSetup& setup,
                        std::vector<double> alphas,
                        const HeadSelection& selection, NihOptions options);

}  // namespace ctxscope
