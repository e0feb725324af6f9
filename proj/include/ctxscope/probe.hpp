#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/dependency.hpp"
#include "ctxscope/model.hpp"
#include "ctxscope/steering.hpp"

namespace ctxscope {

struct RoleShares {
  double user = 0.0;  // user text and indicator
  double assistant = 0.0;  // assistant text and response prefix
  double bos = 0.0;
  double tmpl = 0.0;
};

struct AllocationBreakdown {
  // Template mass removed and the rest rescaled when any template token is
  // present; equal to the raw shares otherwise.
  double user = 0.0;
  double assistant = 0.0;
  double bos = 0.0;
  RoleShares raw;
};

AllocationBreakdown allocation(const AttentionRecord& record,
                               const AnnotatedSequence& seq, int layer, int head,
                               std::optional<std::size_t> query_position = {});

struct AllocationDelta {
  double user = 0.0;
  double assistant = 0.0;
  AllocationBreakdown templated;
  AllocationBreakdown plain;  // null template
};

// Templated minus null-template shares on selection.heads[layer], both read
// at the last prompt position.
AllocationDelta allocation_delta(const ModelWeights& weights,
                                 const Conversation& conv,
                                 const TemplateSpec& tmpl,
                                 const HeadSelection& selection, int layer,
                                 const TokenizerSpec& tok,
                                 bool response_prefix = false);

struct AllocationRow {
  std::string case_id;
  int layer = 0;
  int head = 0;
  AllocationBreakdown templated;
  double d_user = 0.0;
  double d_assistant = 0.0;
};

struct AllocationBatch {
  std::vector<AllocationRow> rows;
  double mean_d_user = 0.0;
  double mean_d_assistant = 0.0;

  std::string csv() const;
};

// Per prompt, picks the head of `layer` with the most user mass on the
// null-template render, then measures the templated-vs-null delta there.
AllocationBatch allocation_batch(const ModelWeights& weights,
                                 const std::vector<Conversation>& prompts,
                                 const TemplateSpec& tmpl, int layer,
                                 const TokenizerSpec& tok, bool response_prefix);

// Entry [a][b] = |top(a) \ top(b)| / |top(a)| where top(l) holds the
// ceil(fraction * N) highest-scoring turns of layer l (ties by ascending
// conversation id, then turn). Throws MismatchedTurnSets.
std::vector<std::vector<double>> layer_agreement(
    const std::vector<std::vector<DependencyRecord>>& per_layer,
    double top_fraction);

std::string matrix_csv(const std::vector<std::vector<double>>& m);

}  // namespace ctxscope
