#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/model.hpp"

namespace ctxscope {

struct DependencyRecord {
  std::string conv_id;
  int turn = 0;  // 1-based pair index
  double score = 0.0;
  int layer = 0;
  bool annotated = false;
  std::string flag;  // "", "truncated" or "skipped"

  nlohmann::json to_json() const;
  static DependencyRecord from_json(const nlohmann::json& j);
};

enum class HeadMode { PerTokenMax, FixedHead };

// Mean over the response tokens of turn m of the attention mass each token
// puts on user and indicator tokens of turns 1..m, taking the max over the
// heads of `layer` per token (or reading `fixed_head` only).
// Throws EmptyResponse and NoUserTokens.
double dependency_score(const AttentionRecord& record,
                        const AnnotatedSequence& seq, int turn, int layer,
                        HeadMode mode = HeadMode::PerTokenMax,
                        int fixed_head = 0);

struct ScoreOptions {
  std::optional<int> layer;  // default n_layers / 2
  HeadMode head_mode = HeadMode::PerTokenMax;
  int fixed_head = 0;
  TemplateSpec tmpl = TemplateSpec::null_template();
  TokenizerSpec tok;
};

// One record per response, ordered by (conversation order, turn). Sequences
// longer than the model window are right-truncated and flagged; responses
// lost to truncation, or empty, are flagged "skipped" and never annotated.
std::vector<DependencyRecord> score_dataset(
    const std::vector<Conversation>& corpus, const ModelWeights& seed_model,
    const ScoreOptions& options);

std::string records_to_jsonl(const std::vector<DependencyRecord>& records);
std::vector<DependencyRecord> parse_records_jsonl(std::string_view text);

struct RatioReport {
  double beta = 0.6;
  std::size_t n_instructions = 0;
  std::size_t n_annotated = 0;
  double ratio = 0.0;

  nlohmann::json to_json() const;
};

struct AnnotationResult {
  std::vector<Conversation> corpus;
  std::vector<DependencyRecord> records;  // annotated flags set
  RatioReport report;
};

// Flags user turn m when its response scored strictly above beta.
// Throws MissingScores when a pair has no record and InvalidArgument when
// beta is outside (0, 1).
AnnotationResult annotate(const std::vector<Conversation>& corpus,
                          const std::vector<DependencyRecord>& records,
                          double beta);

}  // namespace ctxscope
