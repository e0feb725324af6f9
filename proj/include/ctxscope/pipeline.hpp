#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/chat_template.hpp"
#include "ctxscope/qa.hpp"

namespace ctxscope {

struct SyntheticSpec {
  std::size_t n_conversations = 240;
  std::size_t key_alphabet = 12;  // words combined into "<word> <word>" keys
  std::size_t value_alphabet = 10;  // symbols drawn for values
  std::size_t value_len = 4;
  std::size_t distractor_min = 20;  // filler bytes around the fact
  std::size_t distractor_max = 90;
  double dependent_fraction = 0.5;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

// Two species, labelled in Conversation::extra["species"]: "dependent" turns
// hide a key/value fact in filler and ask for the value; "independent" turns
// ask fixed questions whose answers never change.
std::vector<Conversation> synthesize_corpus(const SyntheticSpec& spec);

// Held-out retrieval questions built like the dependent species.
std::vector<QaCase> synthesize_qa(const SyntheticSpec& spec, std::size_t n,
                                  std::uint64_t seed);

// Flat configuration shared by every pipeline stage. Keys and defaults are
// listed by pipeline_defaults().
nlohmann::json pipeline_defaults();

enum class IndicatorPolicy { Auto, Always, Never };

struct RunManifest {
  nlohmann::json data;  // as written to manifest.json

  static RunManifest load(const std::string& path);
  std::string run_dir() const;
};

// Trains without indicators, evaluates NIH and QA, writes the run directory
// (corpus/, scores/, checkpoints/, eval/) and finally manifest.json.
RunManifest run_vanilla(const nlohmann::json& config, const std::string& run_dir);

// Scores the corpus with the seed checkpoint, annotates at beta, trains with
// indicators and evaluates with the indicator appended per the eval policy.
RunManifest run_indicator(const nlohmann::json& config, const std::string& run_dir,
                          const std::string& seed_checkpoint);

// Metric deltas (indicator - vanilla). Reads each run's metric file; throws
// MismatchedEvalSets when a metric file is missing or the runs were
// evaluated on different case sets.
nlohmann::json compare(const RunManifest& vanilla, const RunManifest& indicator);

// Recomputes every artifact hash; throws CorruptArtifact on a mismatch.
void verify_manifest(const RunManifest& manifest);

// Hash of the evaluation cases, independent of the indicator policy.
std::string eval_set_hash(const nlohmann::json& config);

}  // namespace ctxscope
