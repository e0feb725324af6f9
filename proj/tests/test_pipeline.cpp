#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctxscope/corpus.hpp"
#include "ctxscope/error.hpp"
#include "ctxscope/pipeline.hpp"

using namespace ctxscope;
namespace fs = std::filesystem;

namespace {

nlohmann::json tiny_config() {
  return {{"n_conversations", 12}, {"n_layers", 1}, {"n_heads", 2}, {"d_model", 16},
          {"max_seq_len", 256}, {"steps", 4}, {"batch_size", 2}, {"n_qa", 3},
          {"nih_n_lens", 2}, {"nih_n_depths", 2}, {"gen_len", 8}, {"qa_gen_len", 8},
          {"distractor_max", 40}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ctxscope_test_" + name);
  fs::remove_all(p);
  return p;
}

std::size_t count_species(const std::vector<Conversation>& c, const std::string& s) {
  std::size_t n = 0;
  for (const auto& conv : c) n += conv.extra.value("species", "") == s;
  return n;
}

}  // namespace

TEST_CASE("synthetic corpus species mix") {
  SyntheticSpec spec;
  spec.n_conversations = 40;
  spec.dependent_fraction = 0.0;
  CHECK(count_species(synthesize_corpus(spec), "dependent") == 0);
  spec.dependent_fraction = 1.0;
  CHECK(count_species(synthesize_corpus(spec), "dependent") == 40);
  spec.dependent_fraction = 0.25;
  const auto a = synthesize_corpus(spec);
  CHECK(count_species(a, "dependent") == 10);
  CHECK(count_species(a, "independent") == 30);
  CHECK(corpus_to_jsonl(a) == corpus_to_jsonl(synthesize_corpus(spec)));
  spec.rng_seed = 2;
  CHECK(corpus_to_jsonl(a) != corpus_to_jsonl(synthesize_corpus(spec)));
  for (const auto& conv : a) {
    REQUIRE(conv.turns.size() % 2 == 0);
    CHECK(conv.turns[0].speaker == Speaker::User);
  }
  spec.dependent_fraction = 1.5;
  CHECK_THROWS_AS(synthesize_corpus(spec), Error);
}

TEST_CASE("synthetic QA answers appear in their contexts") {
  const auto cases = synthesize_qa(SyntheticSpec{}, 20, 5);
  REQUIRE(cases.size() == 20);
  for (const auto& c : cases) {
    REQUIRE(c.answers.size() == 1);
    CHECK(c.context.find(c.answers[0]) != std::string::npos);
  }
}

TEST_CASE("configuration keys are checked") {
  CHECK(pipeline_defaults().contains("beta"));
  CHECK_THROWS_AS(eval_set_hash({{"no_such_key", 1}}), Error);
  CHECK_THROWS_AS(eval_set_hash({{"nih_n_lens", "three"}}), Error);
  CHECK(eval_set_hash(tiny_config()) == eval_set_hash(tiny_config()));
  nlohmann::json other = tiny_config();
  other["eval_indicator"] = "always";
  other["beta"] = 0.3;
  CHECK(eval_set_hash(other) == eval_set_hash(tiny_config()));
  other["nih_n_lens"] = 3;
  CHECK(eval_set_hash(other) != eval_set_hash(tiny_config()));
}

TEST_CASE("tiny vanilla and indicator runs") {
  const fs::path root = scratch("pipeline");
  const RunManifest v = run_vanilla(tiny_config(), (root / "v").string());
  CHECK(fs::exists(root / "v" / "manifest.json"));
  CHECK(fs::exists(root / "v" / "checkpoints" / "model.bin"));
  verify_manifest(v);
  const RunManifest v_loaded = RunManifest::load((root / "v" / "manifest.json").string());
  CHECK(v_loaded.data["config_hash"] == v.data["config_hash"]);

  const RunManifest v2 = run_vanilla(tiny_config(), (root / "v2").string());
  CHECK(v2.data["artifacts"] == v.data["artifacts"]);

  const std::string ckpt = (root / "v" / "checkpoints" / "model.bin").string();
  const RunManifest ind = run_indicator(tiny_config(), (root / "i").string(), ckpt);
  verify_manifest(ind);
  for (const char* a : {"scores", "ratio", "annotated_corpus", "instruction_histogram"}) {
    CHECK(ind.data["artifacts"].contains(a));
  }
  CHECK(ind.data["eval_set_hash"] == v.data["eval_set_hash"]);

  const auto self = compare(v, v);
  CHECK(self["deltas"]["nih_mean_recall"] == 0.0);
  CHECK(self["deltas"]["qa_mean_containment"] == 0.0);
  CHECK(self["flags"].size() == 2);
  const auto cmp = compare(v, ind);
  CHECK(cmp["beta"] == 0.6);

  // hand-edited metrics
  const fs::path m = root / "i" / "eval" / "metrics.json";
  nlohmann::json metrics = nlohmann::json::parse(std::ifstream(m));
  const double base_recall = self["vanilla"]["nih_mean_recall"].get<double>();
  metrics["nih_mean_recall"] = base_recall + 0.25;
  metrics["qa_mean_containment"] = 0.0;
  std::ofstream(m) << metrics.dump();
  const auto edited = compare(v, ind);
  CHECK(edited["deltas"]["nih_mean_recall"].get<double>() == doctest::Approx(0.25));
  CHECK(edited["flags"] == nlohmann::json::array({"qa_mean_containment_not_improved"}));
  try {
    verify_manifest(ind);
    FAIL("expected CorruptArtifact");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptArtifact);
  }

  fs::remove(m);
  try {
    compare(v, ind);
    FAIL("expected MismatchedEvalSets");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MismatchedEvalSets);
  }
  RunManifest shifted = v2;
  shifted.data["eval_set_hash"] = "0";
  CHECK_THROWS_AS(compare(v, shifted), Error);
  CHECK_THROWS_AS(RunManifest::load(ckpt), Error);
  fs::remove_all(root);
}
