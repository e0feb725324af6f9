#include "ctxscope/dependency.hpp"

#include <algorithm>
#include <exception>
#include <map>

#include "ctxscope/error.hpp"

namespace ctxscope {

nlohmann::json DependencyRecord::to_json() const {
  nlohmann::json j{{"conv_id", conv_id},
                   {"turn", turn},
                   {"score", score},
                   {"layer", layer},
                   {"annotated", annotated}};
  if (!flag.empty()) j["flag"] = flag;
  return j;
}

DependencyRecord DependencyRecord::from_json(const nlohmann::json& j) {
  DependencyRecord r;
  r.conv_id = j.at("conv_id").get<std::string>();
  r.turn = j.at("turn").get<int>();
  r.score = j.at("score").get<double>();
  r.layer = j.at("layer").get<int>();
  r.annotated = j.value("annotated", false);
  r.flag = j.value("flag", std::string{});
  return r;
}

double dependency_score(const AttentionRecord& record,
                        const AnnotatedSequence& seq, int turn, int layer,
                        HeadMode mode, int fixed_head) {
  if (layer < 0 || layer >= record.n_layers()) {
    fail(ErrorKind::InvalidArgument, "probe layer out of range");
  }
  if (mode == HeadMode::FixedHead && (fixed_head < 0 || fixed_head >= record.n_heads())) {
    fail(ErrorKind::InvalidArgument, "fixed head out of range");
  }
  if (record.seq_len() != seq.size()) {
    fail(ErrorKind::InvalidArgument, "attention record and sequence differ in length");
  }
  const std::vector<bool> user = role_mask(seq, kUserRoles, turn);
  std::vector<std::size_t> response;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.roles[i] == Role::Assistant && seq.turn_index[i] == turn) {
      response.push_back(i);
    }
  }
  if (response.empty()) {
    fail(ErrorKind::EmptyResponse, "turn " + std::to_string(turn) + " has no response tokens");
  }
  if (std::find(user.begin(), user.begin() + static_cast<long>(response.front()), true) ==
      user.begin() + static_cast<long>(response.front())) {
    fail(ErrorKind::NoUserTokens, "no user tokens precede turn " + std::to_string(turn));
  }

  const int h_begin = mode == HeadMode::FixedHead ? fixed_head : 0;
  const int h_end = mode == HeadMode::FixedHead ? fixed_head + 1 : record.n_heads();
  double total = 0.0;
  for (std::size_t y : response) {
    double best = 0.0;
    for (int h = h_begin; h < h_end; ++h) {
      const auto row = record.row(layer, h, y);
      double mass = 0.0;
      for (std::size_t k = 0; k <= y; ++k) {
        if (user[k]) mass += row[k];
      }
      best = std::max(best, mass);
    }
    total += best;
  }
  return std::clamp(total / static_cast<double>(response.size()), 0.0, 1.0);
}

std::vector<DependencyRecord> score_dataset(
    const std::vector<Conversation>& corpus, const ModelWeights& seed_model,
    const ScoreOptions& options) {
  const ModelConfig& cfg = seed_model.config;
  const int layer = options.layer.value_or(cfg.n_layers / 2);
  if (layer < 0 || layer >= cfg.n_layers) {
    fail(ErrorKind::InvalidArgument, "probe layer out of range");
  }
  const auto limit = static_cast<std::size_t>(cfg.max_seq_len);

  std::vector<std::vector<DependencyRecord>> per_conv(corpus.size());
  std::vector<std::exception_ptr> errors(corpus.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    try {
      const Conversation& conv = corpus[c];
      // Attention is causal, so one pass over the whole conversation yields
      // the same rows as a separate pass over each prefix ending at turn m.
      AnnotatedSequence seq = render(conv, options.tmpl, options.tok, false);
      const bool truncated = seq.size() > limit;
      if (truncated) {
        seq.tokens.resize(limit);
        seq.roles.resize(limit);
        seq.turn_index.resize(limit);
      }
      const ForwardResult fr = forward(seq.tokens, seed_model, true);
      const auto n_pairs = static_cast<int>(conv.n_pairs());
      for (int m = 1; m <= n_pairs; ++m) {
        DependencyRecord r;
        r.conv_id = conv.id;
        r.turn = m;
        r.layer = layer;
        try {
          r.score = dependency_score(*fr.attention, seq, m, layer,
                                     options.head_mode, options.fixed_head);
          if (truncated) r.flag = "truncated";
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::EmptyResponse &&
              e.kind() != ErrorKind::NoUserTokens) {
            throw;
          }
          r.score = 0.0;
          r.flag = "skipped";
        }
        per_conv[c].push_back(std::move(r));
      }
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<DependencyRecord> out;
  for (auto& v : per_conv) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

std::string records_to_jsonl(const std::vector<DependencyRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<DependencyRecord> parse_records_jsonl(std::string_view text) {
  std::vector<DependencyRecord> out;
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
      out.push_back(DependencyRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json RatioReport::to_json() const {
  return {{"beta", beta},
          {"n_instructions", n_instructions},
          {"n_annotated", n_annotated},
          {"ratio", ratio}};
}

AnnotationResult annotate(const std::vector<Conversation>& corpus,
                          const std::vector<DependencyRecord>& records,
                          double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    fail(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
  }
  std::map<std::pair<std::string, int>, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    index[{records[i].conv_id, records[i].turn}] = i;
  }
  AnnotationResult out;
  out.records = records;
  out.report.beta = beta;
  std::vector<bool> used(records.size(), false);
  for (const Conversation& conv : corpus) {
    Conversation annotated = conv;
    int m = 0;
    for (Turn& t : annotated.turns) {
      if (t.speaker != Speaker::User) continue;
      ++m;
      const auto it = index.find({conv.id, m});
      if (it == index.end()) {
        fail(ErrorKind::MissingScores, "no score for conversation '" + conv.id +
                                           "' turn " + std::to_string(m));
      }
      DependencyRecord& r = out.records[it->second];
      used[it->second] = true;
      r.annotated = r.flag != "skipped" && r.score > beta;
      t.indicator = r.annotated;
      ++out.report.n_instructions;
      if (r.annotated) ++out.report.n_annotated;
    }
    out.corpus.push_back(std::move(annotated));
  }
  // Records for pairs outside the corpus are left unannotated.
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) out.records[i].annotated = false;
  }
  if (out.report.n_instructions > 0) {
    out.report.ratio = static_cast<double>(out.report.n_annotated) /
                       static_cast<double>(out.report.n_instructions);
  }
  return out;
}

}  // namespace ctxscope
