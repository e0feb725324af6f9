#include "ctxscope/nih.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <sstream>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"
#include "ctxscope/prompts.hpp"

namespace ctxscope {

BuiltCase build_case(const NihCase& c, const NihSetup& setup) {
  const std::string& needle = c.needle.text;
  if (c.context_len < needle.size()) {
    fail(ErrorKind::InvalidArgument,
         "context_len " + std::to_string(c.context_len) +
             " is shorter than the needle");
  }
  if (!(c.depth >= 0.0 && c.depth <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "depth must lie in [0, 1]");
  }
  const std::size_t filler_len = c.context_len - needle.size();
  if (setup.haystack.size() < filler_len) {
    fail(ErrorKind::HaystackTooShort,
         "haystack has " + std::to_string(setup.haystack.size()) +
             " bytes, need " + std::to_string(filler_len));
  }
  // The small slack keeps grid depths like 1/3 from flooring one short.
  const auto offset = std::min(
      filler_len, static_cast<std::size_t>(
                      std::floor(c.depth * static_cast<double>(filler_len) + 1e-9)));

  BuiltCase out;
  const std::string_view filler(setup.haystack.data(), filler_len);
  out.context.append(filler.substr(0, offset));
  if (offset > 0) out.context.push_back(' ');
  out.needle_offset = out.context.size();
  out.context += needle;
  if (offset < filler_len) out.context.push_back(' ');
  out.context.append(filler.substr(offset));

  Conversation conv;
  conv.id = "nih-" + std::to_string(c.context_len) + "-" + format_double(c.depth);
  conv.turns.push_back(
      {Speaker::User, fill_prompt(setup.format, out.context, c.needle.question),
       setup.indicator});
  out.prompt = render(conv, setup.tmpl, setup.tok, c.response_prefix);
  return out;
}

std::vector<std::size_t> grid_lengths(const GridSpec& g) {
  if (g.n_lens == 0 || g.n_depths == 0) {
    fail(ErrorKind::InvalidGrid, "grid needs at least one length and one depth");
  }
  if (g.max_len <= g.min_len) {
    fail(ErrorKind::InvalidGrid, "max_len must exceed min_len");
  }
  if (g.n_lens == 1) return {g.min_len};
  const std::size_t span = g.max_len - g.min_len;
  const std::size_t den = g.n_lens - 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.n_lens; ++i) {
    const std::size_t num = i * span;
    std::size_t q = num / den;
    if (2 * (num % den) >= den) ++q;  // round half up
    out.push_back(g.min_len + q);
  }
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    fail(ErrorKind::InvalidGrid, "length range too narrow for n_lens distinct lengths");
  }
  return out;
}

std::vector<double> grid_depths(const GridSpec& g) {
  if (g.n_depths == 0) fail(ErrorKind::InvalidGrid, "grid needs at least one depth");
  if (g.n_depths == 1) return {0.0};
  std::vector<double> out;
  for (std::size_t j = 0; j < g.n_depths; ++j) {
    out.push_back(static_cast<double>(j) / static_cast<double>(g.n_depths - 1));
  }
  return out;
}

std::vector<NihCase> build_grid(const GridSpec& g, const NihCase& base) {
  if (base.needle.keywords.empty()) {
    fail(ErrorKind::EmptyKeywordSet, "needle has no keywords");
  }
  const auto lengths = grid_lengths(g);
  const auto depths = grid_depths(g);
  std::vector<NihCase> cases;
  for (std::size_t len : lengths) {
    for (double d : depths) {
      NihCase c = base;
      c.context_len = len;
      c.depth = d;
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

double recall(std::span<const TokenId> output,
              const std::vector<std::string>& keywords, const TokenizerSpec& tok,
              std::size_t window) {
  if (keywords.empty()) fail(ErrorKind::EmptyKeywordSet, "no keywords to score");
  const std::string text =
      detokenize(output.first(std::min(window, output.size())), tok);
  std::size_t hits = 0;
  for (const auto& k : keywords) {
    if (text.find(k) != std::string::npos) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(keywords.size());
}

NihReport run_nih(const TextGenerator& model, const std::vector<NihCase>& cases,
                  const NihSetup& setup, const NihOptions& options) {
  NihReport report;
  report.cells.resize(cases.size());
  std::vector<std::exception_ptr> errors(cases.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const NihCase& c = cases[i];
    NihCell& cell = report.cells[i];
    cell.context_len = c.context_len;
    cell.depth = c.depth;
    try {
      const BuiltCase built = build_case(c, setup);
      std::optional<SteeringSpec> steering;
      if (options.selection) {
        steering = steering_for(*options.selection, options.alpha,
                                role_mask(built.prompt, kUserRoles));
      }
      const auto out = model.generate(built.prompt, options.gen_len,
                                      steering ? &*steering : nullptr);
      cell.recall = recall(out, c.needle.keywords, setup.tok, options.window);
      cell.output = detokenize(out, setup.tok);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SequenceTooLong) {
        cell.failed = true;
        cell.recall = 0.0;
        cell.error = e.what();
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
  for (const NihCell& cell : report.cells) {
    total += cell.recall;
    if (cell.failed) ++report.failures;
    if (std::find(report.lengths.begin(), report.lengths.end(), cell.context_len) ==
        report.lengths.end()) {
      report.lengths.push_back(cell.context_len);
    }
    if (std::find(report.depths.begin(), report.depths.end(), cell.depth) ==
        report.depths.end()) {
      report.depths.push_back(cell.depth);
    }
  }
  if (!report.cells.empty()) {
    report.mean_recall = total / static_cast<double>(report.cells.size());
  }
  report.mean_err = 1.0 - report.mean_recall;
  return report;
}

std::string NihReport::heatmap_csv() const {
  std::map<std::pair<std::size_t, double>, double> at;
  for (const auto& c : cells) at[{c.context_len, c.depth}] = c.recall;
  std::ostringstream out;
  out << "depth";
  for (std::size_t len : lengths) out << ',' << len;
  out << '\n';
  for (double d : depths) {
    out << format_double(d);
    for (std::size_t len : lengths) {
      out << ',';
      if (auto it = at.find({len, d}); it != at.end()) out << format_double(it->second);
    }
    out << '\n';
  }
  return out.str();
}

std::string NihReport::cases_csv() const {
  std::ostringstream out;
  out << "context_len,depth,recall,failed\n";
  for (const auto& c : cells) {
    out << c.context_len << ',' << format_double(c.depth) << ','
        << format_double(c.recall) << ',' << (c.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

nlohmann::json NihReport::summary() const {
  return {{"mean_recall", mean_recall},
          {"mean_err", mean_err},
          {"n_cases", cells.size()},
          {"failures", failures}};
}

std::string SweepResult::csv() const {
  std::ostringstream out;
  out << "alpha,mean_recall,mean_err\n";
  for (const auto& r : rows) {
    out << format_double(r.alpha) << ',' << format_double(r.mean_recall) << ','
        << format_double(r.mean_err) << '\n';
  }
  return out.str();
}

SweepResult sweep_alpha(const TextGenerator& model,
                        const std::vector<NihCase>& cases, const NihSetup& setup,
                        std::vector<double> alphas,
                        const HeadSelection& selection, NihOptions options) {
  if (cases.empty()) fail(ErrorKind::InvalidGrid, "empty NIH grid");
  if (alphas.empty()) fail(ErrorKind::InvalidArgument, "no alphas to sweep");
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  SweepResult result;
  double best = -1.0;
  options.selection = selection;
  for (double a : alphas) {
    options.alpha = a;
    const NihReport r = run_nih(model, cases, setup, options);
    result.rows.push_back({a, r.mean_recall, r.mean_err});
    if (r.mean_recall >= best) {
      best = r.mean_recall;
      result.best_alpha = a;
    }
  }
  return result;
}

}  // namespace ctxscope
