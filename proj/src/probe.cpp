#include "ctxscope/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"

namespace ctxscope {

AllocationBreakdown allocation(const AttentionRecord& record,
                               const AnnotatedSequence& seq, int layer, int head,
                               std::optional<std::size_t> query_position) {
  if (layer < 0 || layer >= record.n_layers() || head < 0 ||
      head >= record.n_heads()) {
    fail(ErrorKind::InvalidArgument, "layer or head out of range");
  }
  if (record.seq_len() != seq.size() || seq.size() == 0) {
    fail(ErrorKind::InvalidArgument, "attention record and sequence differ in length");
  }
  const std::size_t q = query_position.value_or(seq.size() - 1);
  if (q >= seq.size()) fail(ErrorKind::InvalidArgument, "query position out of range");

  AllocationBreakdown out;
  RoleShares& raw = out.raw;
  bool has_template = false;
  const auto row = record.row(layer, head, q);
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const Role r = seq.roles[k];
    if (r == Role::Template) has_template = true;
    if (k > q) continue;
    switch (r) {
      case Role::User:
      case Role::Indicator: raw.user += row[k]; break;
      case Role::Assistant:
      case Role::ResponsePrefix: raw.assistant += row[k]; break;
      case Role::Bos: raw.bos += row[k]; break;
      case Role::Template: raw.tmpl += row[k]; break;
    }
  }
  out.user = raw.user;
  out.assistant = raw.assistant;
  out.bos = raw.bos;
  const double kept = raw.user + raw.assistant + raw.bos;
  if (has_template && kept > 0.0) {
    out.user /= kept;
    out.assistant /= kept;
    out.bos /= kept;
  }
  return out;
}

AllocationDelta allocation_delta(const ModelWeights& weights,
                                 const Conversation& conv,
                                 const TemplateSpec& tmpl,
                                 const HeadSelection& selection, int layer,
                                 const TokenizerSpec& tok, bool response_prefix) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= selection.heads.size()) {
    fail(ErrorKind::InvalidArgument, "selection has no head for this layer");
  }
  const int head = selection.heads[static_cast<std::size_t>(layer)];
  const AnnotatedSequence with = render(conv, tmpl, tok, response_prefix);
  const AnnotatedSequence without =
      render(conv, TemplateSpec::null_template(), tok, false);
  const ForwardResult a = forward(with.tokens, weights, true);
  const ForwardResult b = forward(without.tokens, weights, true);
  AllocationDelta d;
  d.templated = allocation(*a.attention, with, layer, head);
  d.plain = allocation(*b.attention, without, layer, head);
  d.user = d.templated.user - d.plain.user;
  d.assistant = d.templated.assistant - d.plain.assistant;
  return d;
}

AllocationBatch allocation_batch(const ModelWeights& weights,
                                 const std::vector<Conversation>& prompts,
                                 const TemplateSpec& tmpl, int layer,
                                 const TokenizerSpec& tok, bool response_prefix) {
  AllocationBatch batch;
  batch.rows.resize(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      const AnnotatedSequence plain =
          render(prompts[i], TemplateSpec::null_template(), tok, false);
      const ForwardResult fr = forward(plain.tokens, weights, true);
      const HeadSelection sel =
          select_heads(*fr.attention, role_mask(plain, kUserRoles));
      const AllocationDelta d =
          allocation_delta(weights, prompts[i], tmpl, sel, layer, tok, response_prefix);
      AllocationRow& row = batch.rows[i];
      row.case_id = prompts[i].id;
      row.layer = layer;
      row.head = sel.heads[static_cast<std::size_t>(layer)];
      row.templated = d.templated;
      row.d_user = d.user;
      row.d_assistant = d.assistant;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& r : batch.rows) {
    batch.mean_d_user += r.d_user;
    batch.mean_d_assistant += r.d_assistant;
  }
  if (!batch.rows.empty()) {
    batch.mean_d_user /= static_cast<double>(batch.rows.size());
    batch.mean_d_assistant /= static_cast<double>(batch.rows.size());
  }
  return batch;
}

std::string AllocationBatch::csv() const {
  std::ostringstream out;
  out << "case_id,layer,head,user,assistant,bos,d_user,d_assistant\n";
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.layer << ',' << r.head << ','
        << format_double(r.templated.user) << ','
        << format_double(r.templated.assistant) << ','
        << format_double(r.templated.bos) << ',' << format_double(r.d_user) << ','
        << format_double(r.d_assistant) << '\n';
  }
  return out.str();
}

std::vector<std::vector<double>> layer_agreement(
    const std::vector<std::vector<DependencyRecord>>& per_layer,
    double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "top fraction must lie in (0, 1]");
  }
  using Key = std::pair<std::string, int>;
  std::vector<std::set<Key>> tops;
  std::set<Key> reference;
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    std::set<Key> keys;
    for (const auto& r : per_layer[l]) keys.insert({r.conv_id, r.turn});
    if (keys.size() != per_layer[l].size()) {
      fail(ErrorKind::MismatchedTurnSets, "duplicate turn in layer " + std::to_string(l));
    }
    if (l == 0) {
      reference = keys;
    } else if (keys != reference) {
      fail(ErrorKind::MismatchedTurnSets,
           "layer " + std::to_string(l) + " scored a different turn set");
    }
    std::vector<const DependencyRecord*> sorted;
    for (const auto& r : per_layer[l]) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const DependencyRecord* a, const DependencyRecord* b) {
                if (a->score != b->score) return a->score > b->score;
                if (a->conv_id != b->conv_id) return a->conv_id < b->conv_id;
                return a->turn < b->turn;
              });
    // The slack keeps products like 0.1 * 30 from rounding up to 4.
    const auto k = static_cast<std::size_t>(
        std::ceil(top_fraction * static_cast<double>(sorted.size()) - 1e-9));
    std::set<Key> top;
    for (std::size_t i = 0; i < k && i < sorted.size(); ++i) {
      top.insert({sorted[i]->conv_id, sorted[i]->turn});
    }
    tops.push_back(std::move(top));
  }
  const std::size_t L = per_layer.size();
  std::vector<std::vector<double>> m(L, std::vector<double>(L, 0.0));
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) {
      if (tops[a].empty()) continue;
      std::size_t missing = 0;
      for (const auto& key : tops[a]) {
        if (!tops[b].count(key)) ++missing;
      }
      m[a][b] = static_cast<double>(missing) / static_cast<double>(tops[a].size());
    }
  }
  return m;
}

std::string matrix_csv(const std::vector<std::vector<double>>& m) {
  std::ostringstream out;
  out << "layer";
  for (std::size_t j = 0; j < m.size(); ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << i;
    for (double v : m[i]) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace ctxscope
