#include "ctxscope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include <fmt/core.h>

#include "ctxscope/checkpoint.hpp"
#include "ctxscope/corpus.hpp"
#include "ctxscope/dependency.hpp"
#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"
#include "ctxscope/nih.hpp"
#include "ctxscope/prompts.hpp"
#include "ctxscope/training.hpp"

namespace ctxscope {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kKeyFirst{
    "silver", "amber", "copper", "crimson", "golden", "hidden",
    "northern", "quiet", "rusty", "velvet", "western", "winter",
    "broken", "painted", "narrow", "ancient"};
const std::vector<std::string> kKeySecond{
    "gate", "tower", "bridge", "garden", "harbor", "lantern",
    "mill", "orchard", "river", "vault", "well", "window",
    "chapel", "cellar", "meadow", "stair"};
constexpr std::string_view kSymbols = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

struct FixedFact {
  const char* question;
  const char* answer;
};

const std::vector<FixedFact> kFixedFacts{
    {"What is the capital of the northern province?",
     "The capital of the northern province is Varden."},
    {"How many legs does a spider have?", "A spider has eight legs."},
    {"What color is a clear daytime sky?", "A clear daytime sky is blue."},
    {"Which planet is closest to the sun?", "Mercury is closest to the sun."},
    {"What do bees make?", "Bees make honey."},
    {"What is frozen water called?", "Frozen water is called ice."},
};

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find(' ', pos), text.size());
    if (end > pos) words.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return words;
}

struct Retrieval {
  std::string context;
  std::string question;
  std::string value;
  std::string answer;
};

class RetrievalMaker {
 public:
  explicit RetrievalMaker(const SyntheticSpec& spec)
      : spec_(spec), words_(split_words(load_haystack(data_dir() + "/haystack.txt"))) {}

  Retrieval make(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> key(0, spec_.key_alphabet - 1);
    std::uniform_int_distribution<std::size_t> sym(0, spec_.value_alphabet - 1);
    std::uniform_int_distribution<std::size_t> len(spec_.distractor_min,
                                                   spec_.distractor_max);
    std::uniform_int_distribution<std::size_t> start(0, words_.size() - 1);

    const std::string name = kKeyFirst[key(rng) % kKeyFirst.size()] + " " +
                             kKeySecond[key(rng) % kKeySecond.size()];
    Retrieval r;
    for (std::size_t i = 0; i < spec_.value_len; ++i) r.value += kSymbols[sym(rng)];
    const std::string fact = "The code for the " + name + " is " + r.value + ".";

    std::vector<std::string> filler;
    const std::size_t target = len(rng);
    std::size_t bytes = 0;
    for (std::size_t w = start(rng); bytes < target; w = (w + 1) % words_.size()) {
      filler.push_back(words_[w]);
      bytes += words_[w].size() + 1;
    }
    std::uniform_int_distribution<std::size_t> at(0, filler.size());
    filler.insert(filler.begin() + static_cast<long>(at(rng)), fact);
    for (std::size_t i = 0; i < filler.size(); ++i) {
      if (i) r.context += ' ';
      r.context += filler[i];
    }
    r.question = "What is the code for the " + name + "?";
    r.answer = fact;
    return r;
  }

 private:
  const SyntheticSpec& spec_;
  std::vector<std::string> words_;
};

template <class T>
T get(const nlohmann::json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("config key '") + key + "': " + e.what());
  }
}

nlohmann::json merged(const nlohmann::json& config) {
  nlohmann::json out = pipeline_defaults();
  for (const auto& [k, v] : config.items()) {
    if (!out.contains(k)) fail(ErrorKind::InvalidArgument, "unknown config key '" + k + "'");
    out[k] = v;
  }
  return out;
}

SyntheticSpec spec_from(const nlohmann::json& cfg) {
  SyntheticSpec s;
  s.n_conversations = get<std::size_t>(cfg, "n_conversations");
  s.key_alphabet = get<std::size_t>(cfg, "key_alphabet");
  s.value_alphabet = get<std::size_t>(cfg, "value_alphabet");
  s.value_len = get<std::size_t>(cfg, "value_len");
  s.distractor_min = get<std::size_t>(cfg, "distractor_min");
  s.distractor_max = get<std::size_t>(cfg, "distractor_max");
  s.dependent_fraction = get<double>(cfg, "dependent_fraction");
  s.rng_seed = get<std::uint64_t>(cfg, "seed");
  s.validate();
  return s;
}

ModelConfig model_from(const nlohmann::json& cfg) {
  ModelConfig m;
  m.n_layers = get<int>(cfg, "n_layers");
  m.n_heads = get<int>(cfg, "n_heads");
  m.d_model = get<int>(cfg, "d_model");
  m.max_seq_len = get<int>(cfg, "max_seq_len");
  m.vocab_size = static_cast<int>(TokenizerSpec::standard().vocab_size());
  m.rng_seed = get<std::uint64_t>(cfg, "seed");
  m.validate();
  return m;
}

TrainConfig train_from(const nlohmann::json& cfg) {
  TrainConfig t;
  const auto steps = get<long long>(cfg, "steps");
  if (steps >= 0) t.steps = static_cast<std::size_t>(steps);
  t.batch_size = get<std::size_t>(cfg, "batch_size");
  t.lr = get<double>(cfg, "lr");
  t.clip = get<double>(cfg, "clip");
  t.seed = get<std::uint64_t>(cfg, "seed");
  t.validate();
  return t;
}

std::vector<QaCase> qa_cases_from(const nlohmann::json& cfg) {
  return synthesize_qa(spec_from(cfg), get<std::size_t>(cfg, "n_qa"),
                       get<std::uint64_t>(cfg, "seed") + 7919);
}

struct EvalPlan {
  std::vector<NihCase> nih_cases;
  NihSetup nih;
  NihOptions nih_options;
  std::vector<QaCase> qa_cases;
  QaSetup qa;
};

EvalPlan eval_plan(const nlohmann::json& cfg, bool indicator) {
  const PromptFormats formats = PromptFormats::bundled();
  auto pick = [](const std::map<std::string, std::string>& m, const std::string& k) {
    const auto it = m.find(k);
    if (it == m.end()) fail(ErrorKind::InvalidArgument, "unknown prompt format '" + k + "'");
    return it->second;
  };
  EvalPlan p;
  const TemplateSpec tmpl = resolve_template(get<std::string>(cfg, "template"));
  GridSpec grid;
  grid.min_len = get<std::size_t>(cfg, "nih_min_len");
  grid.max_len = get<std::size_t>(cfg, "nih_max_len");
  grid.n_lens = get<std::size_t>(cfg, "nih_n_lens");
  grid.n_depths = get<std::size_t>(cfg, "nih_n_depths");
  NihCase base;
  base.template_id = tmpl.name;
  base.response_prefix = get<bool>(cfg, "response_prefix");
  p.nih_cases = build_grid(grid, base);
  p.nih.haystack = load_haystack(data_dir() + "/haystack.txt");
  p.nih.tmpl = tmpl;
  p.nih.format = pick(formats.nih, get<std::string>(cfg, "nih_format"));
  p.nih.indicator = indicator;
  p.nih_options.gen_len = get<std::size_t>(cfg, "gen_len");
  p.nih_options.window = get<std::size_t>(cfg, "window");
  p.qa_cases = qa_cases_from(cfg);
  p.qa.tmpl = tmpl;
  p.qa.format = pick(formats.qa, get<std::string>(cfg, "qa_style"));
  p.qa.indicator = indicator;
  p.qa.gen_len = get<std::size_t>(cfg, "qa_gen_len");
  return p;
}

struct RunContext {
  nlohmann::json cfg;
  std::string dir;
  std::string started;
  nlohmann::json artifacts = nlohmann::json::object();

  std::string path(const std::string& rel) const { return dir + "/" + rel; }

  void put(const std::string& name, const std::string& rel, std::string_view bytes) {
    write_file(path(rel), bytes);
    artifacts[name] = {{"path", rel}, {"sha256", sha256_hex(bytes)}};
  }
  void put_json(const std::string& name, const std::string& rel, const nlohmann::json& j) {
    put(name, rel, j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
  }
};

RunContext open_run(const nlohmann::json& config, const std::string& run_dir) {
  RunContext ctx;
  ctx.cfg = merged(config);
  ctx.dir = fs::absolute(run_dir).lexically_normal().string();
  ctx.started = utc_timestamp();
  fs::create_directories(ctx.dir);
  fs::remove(ctx.dir + "/manifest.json");
  return ctx;
}

std::vector<Conversation> training_corpus(RunContext& ctx, const TemplateSpec& tmpl) {
  PreprocessOptions pre;
  pre.tmpl = tmpl;
  pre.truncate_len = get<std::size_t>(ctx.cfg, "truncate_len");
  Preprocessed p = preprocess(synthesize_corpus(spec_from(ctx.cfg)), pre);
  ctx.put("corpus", "corpus/train.jsonl", corpus_to_jsonl(p.corpus));
  ctx.put_json("preprocess_stats", "corpus/preprocess_stats.json", p.stats.to_json());
  ctx.put("qa_cases", "corpus/qa_eval.jsonl", qa_to_jsonl(qa_cases_from(ctx.cfg)));
  return std::move(p.corpus);
}

ModelWeights train_stage(RunContext& ctx, const std::vector<Conversation>& corpus,
                         const TemplateSpec& tmpl, nlohmann::json& metrics) {
  const ModelConfig mc = model_from(ctx.cfg);
  // examples never outgrow the model window
  const std::size_t truncate_len = std::min(get<std::size_t>(ctx.cfg, "truncate_len"),
                                            static_cast<std::size_t>(mc.max_seq_len));
  std::vector<Example> examples;
  for (const auto& conv : corpus) {
    examples.push_back(make_example(conv, tmpl, TokenizerSpec::standard(), truncate_len));
  }
  const TrainConfig tc = train_from(ctx.cfg);
  const ModelWeights init = ModelWeights::init(mc);
  TrainResult r = train(examples, mc, tc, &init);
  const double before = batch_loss(init, examples);
  const double after = batch_loss(r.weights, examples);
  metrics["train_loss_initial"] = before;
  metrics["train_loss_final"] = after;
  metrics["loss_reduction"] = 1.0 - after / before;
  metrics["train_steps"] = r.loss_trace.size();

  save_checkpoint(ctx.path("checkpoints/model.bin"), r.weights);
  ctx.artifacts["checkpoint"] = {{"path", "checkpoints/model.bin"},
                                 {"sha256", sha256_file(ctx.path("checkpoints/model.bin"))}};
  std::string trace = "step,loss\n";
  for (std::size_t i = 0; i < r.loss_trace.size(); ++i) {
    trace += std::to_string(i) + "," + format_double(r.loss_trace[i]) + "\n";
  }
  ctx.put("loss_trace", "checkpoints/loss.csv", trace);
  return std::move(r.weights);
}

void eval_stage(RunContext& ctx, const ModelWeights& w, bool indicator,
                nlohmann::json& metrics) {
  const EvalPlan plan = eval_plan(ctx.cfg, indicator);
  const TransformerGenerator gen(w, TokenizerSpec::standard().eos());
  const NihReport nih = run_nih(gen, plan.nih_cases, plan.nih, plan.nih_options);
  ctx.put("nih_heatmap", "eval/nih_heatmap.csv", nih.heatmap_csv());
  ctx.put("nih_cases", "eval/nih_cases.csv", nih.cases_csv());
  ctx.put_json("nih_summary", "eval/nih_summary.json", nih.summary());
  const QaReport qa = run_qa(gen, plan.qa_cases, plan.qa);
  ctx.put("qa_results", "eval/qa_results.csv", qa.csv());
  ctx.put_json("qa_summary", "eval/qa_summary.json", qa.summary());

  metrics["nih_mean_recall"] = nih.mean_recall;
  metrics["nih_mean_err"] = nih.mean_err;
  metrics["nih_failures"] = nih.failures;
  metrics["qa_mean_containment"] = qa.mean_containment;
  metrics["qa_failures"] = qa.failures;
  metrics["eval_indicator"] = indicator;
  ctx.put_json("metrics", "eval/metrics.json", metrics);
}

RunManifest finish(RunContext& ctx, const std::string& mode, nlohmann::json extra) {
  nlohmann::json m{{"mode", mode},
                   {"config", ctx.cfg},
                   {"config_hash", sha256_hex(ctx.cfg.dump())},
                   {"seed", ctx.cfg.at("seed")},
                   {"run_dir", ctx.dir},
                   {"corpus_path", ctx.path("corpus/train.jsonl")},
                   {"checkpoint_path", ctx.path("checkpoints/model.bin")},
                   {"eval_set_hash", eval_set_hash(ctx.cfg)},
                   {"artifacts", ctx.artifacts},
                   {"timestamps", {{"started", ctx.started}, {"finished", utc_timestamp()}}}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(ctx.path("manifest.json"), m);
  return RunManifest{m};
}

IndicatorPolicy policy_from(const nlohmann::json& cfg) {
  const auto p = get<std::string>(cfg, "eval_indicator");
  if (p == "auto") return IndicatorPolicy::Auto;
  if (p == "always") return IndicatorPolicy::Always;
  if (p == "never") return IndicatorPolicy::Never;
  fail(ErrorKind::InvalidArgument, "eval_indicator must be auto, always or never");
}

}  // namespace

void SyntheticSpec::validate() const {
  if (!(dependent_fraction >= 0.0 && dependent_fraction <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "dependent_fraction must lie in [0, 1]");
  }
  if (key_alphabet == 0 || value_alphabet == 0 || value_alphabet > kSymbols.size()) {
    fail(ErrorKind::InvalidArgument, "alphabet sizes must be in [1, 36]");
  }
  if (value_len == 0) fail(ErrorKind::InvalidArgument, "value_len must be >= 1");
  if (distractor_min > distractor_max) {
    fail(ErrorKind::InvalidArgument, "distractor_min exceeds distractor_max");
  }
}

std::vector<Conversation> synthesize_corpus(const SyntheticSpec& spec) {
  spec.validate();
  const RetrievalMaker maker(spec);
  const PromptFormats formats = PromptFormats::bundled();
  std::vector<std::string> layouts;
  for (const auto& [name, f] : formats.nih) layouts.push_back(f);
  for (const auto& [name, f] : formats.qa) layouts.push_back(f);

  std::mt19937_64 rng(spec.rng_seed);
  const auto n_dep = static_cast<std::size_t>(
      std::llround(spec.dependent_fraction * static_cast<double>(spec.n_conversations)));
  std::vector<bool> dependent(spec.n_conversations, false);
  std::fill(dependent.begin(), dependent.begin() + static_cast<long>(n_dep), true);
  std::shuffle(dependent.begin(), dependent.end(), rng);

  std::uniform_int_distribution<std::size_t> layout(0, layouts.size() - 1);
  std::uniform_int_distribution<std::size_t> fact(0, kFixedFacts.size() - 1);
  std::bernoulli_distribution follow_up(0.25);

  std::vector<Conversation> out;
  for (std::size_t i = 0; i < spec.n_conversations; ++i) {
    Conversation conv;
    conv.id = fmt::format("syn-{:05}", i + 1);
    if (dependent[i]) {
      const Retrieval r = maker.make(rng);
      conv.turns.push_back(
          {Speaker::User, fill_prompt(layouts[layout(rng)], r.context, r.question), false});
      conv.turns.push_back({Speaker::Assistant, r.answer, false});
      conv.extra["species"] = "dependent";
    } else {
      const FixedFact& f = kFixedFacts[fact(rng)];
      conv.turns.push_back({Speaker::User, f.question, false});
      conv.turns.push_back({Speaker::Assistant, f.answer, false});
      conv.extra["species"] = "independent";
    }
    if (follow_up(rng)) {
      const FixedFact& f = kFixedFacts[fact(rng)];
      conv.turns.push_back({Speaker::User, f.question, false});
      conv.turns.push_back({Speaker::Assistant, f.answer, false});
    }
    out.push_back(std::move(conv));
  }
  return out;
}

std::vector<QaCase> synthesize_qa(const SyntheticSpec& spec, std::size_t n,
                                  std::uint64_t seed) {
  spec.validate();
  const RetrievalMaker maker(spec);
  std::mt19937_64 rng(seed);
  std::vector<QaCase> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Retrieval r = maker.make(rng);
    char buf[32];
    std::snprintf(buf, sizeof buf, "qa-%04zu", i);
    out.push_back({buf, r.context, r.question, {r.value}});
  }
  return out;
}

nlohmann::json pipeline_defaults() {
  return {
      {"seed", 1},
      {"n_conversations", 240},
      {"dependent_fraction", 0.5},
      {"key_alphabet", 12},
      {"value_alphabet", 10},
      {"value_len", 4},
      {"distractor_min", 20},
      {"distractor_max", 90},
      {"n_layers", 2},
      {"n_heads", 4},
      {"d_model", 64},
      {"max_seq_len", 512},
      {"steps", -1},
      {"batch_size", 4},
      {"lr", 2e-3},
      {"clip", 1.0},
      {"truncate_len", 4096},
      {"template", "chat"},
      {"beta", 0.6},
      {"probe_layer", -1},
      {"head_mode", "per-token-max"},
      {"eval_indicator", "always"},
      {"nih_min_len", 100},
      {"nih_max_len", 300},
      {"nih_n_lens", 3},
      {"nih_n_depths", 3},
      {"nih_format", "context"},
      {"response_prefix", false},
      {"gen_len", 50},
      {"window", 100},
      {"n_qa", 16},
      {"qa_style", "instruction"},
      {"qa_gen_len", 100},
  };
}

RunManifest RunManifest::load(const std::string& path) {
  RunManifest m{read_json(path)};
  if (!m.data.is_object() || !m.data.contains("artifacts") || !m.data.contains("run_dir")) {
    fail(ErrorKind::CorruptArtifact, path + ": not a run manifest");
  }
  return m;
}

std::string RunManifest::run_dir() const { return data.at("run_dir").get<std::string>(); }

std::string eval_set_hash(const nlohmann::json& config) {
  const nlohmann::json cfg = merged(config);
  const EvalPlan plan = eval_plan(cfg, false);
  nlohmann::json desc = nlohmann::json::array();
  for (const auto& c : plan.nih_cases) {
    desc.push_back({c.context_len, c.depth, c.needle.text, c.needle.question,
                    c.needle.keywords, c.response_prefix});
  }
  const nlohmann::json all{{"nih", desc},
                           {"nih_format", plan.nih.format},
                           {"template", plan.nih.tmpl.to_json()},
                           {"haystack", sha256_hex(plan.nih.haystack)},
                           {"gen_len", plan.nih_options.gen_len},
                           {"window", plan.nih_options.window},
                           {"qa", qa_to_jsonl(plan.qa_cases)},
                           {"qa_format", plan.qa.format},
                           {"qa_gen_len", plan.qa.gen_len}};
  return sha256_hex(all.dump());
}

RunManifest run_vanilla(const nlohmann::json& config, const std::string& run_dir) {
  RunContext ctx = open_run(config, run_dir);
  const DirLock lock(ctx.dir);
  const TemplateSpec tmpl = resolve_template(get<std::string>(ctx.cfg, "template"));
  const auto corpus = training_corpus(ctx, tmpl);
  nlohmann::json metrics = nlohmann::json::object();
  metrics["mode"] = "vanilla";
  const ModelWeights w = train_stage(ctx, corpus, tmpl, metrics);
  eval_stage(ctx, w, false, metrics);
  return finish(ctx, "vanilla", nlohmann::json::object());
}

RunManifest run_indicator(const nlohmann::json& config, const std::string& run_dir,
                          const std::string& seed_checkpoint) {
  RunContext ctx = open_run(config, run_dir);
  const DirLock lock(ctx.dir);
  const TemplateSpec tmpl = resolve_template(get<std::string>(ctx.cfg, "template"));
  const auto corpus = training_corpus(ctx, tmpl);
  const double beta = get<double>(ctx.cfg, "beta");
  const IndicatorPolicy policy = policy_from(ctx.cfg);

  const ModelWeights seed = load_checkpoint(seed_checkpoint);
  ScoreOptions so;
  so.tmpl = tmpl;
  const int probe_layer = get<int>(ctx.cfg, "probe_layer");
  if (probe_layer >= 0) so.layer = probe_layer;
  const auto head_mode = get<std::string>(ctx.cfg, "head_mode");
  if (head_mode == "fixed-head") {
    so.head_mode = HeadMode::FixedHead;
  } else if (head_mode != "per-token-max") {
    fail(ErrorKind::InvalidArgument, "head_mode must be per-token-max or fixed-head");
  }
  const AnnotationResult ann = annotate(corpus, score_dataset(corpus, seed, so), beta);
  ctx.put("scores", "scores/scores.jsonl", records_to_jsonl(ann.records));
  ctx.put_json("ratio", "scores/ratio.json", ann.report.to_json());
  ctx.put("annotated_corpus", "corpus/annotated.jsonl", corpus_to_jsonl(ann.corpus));
  ctx.put("instruction_histogram", "scores/instruction_hist.csv",
          histogram_csv(instruction_histogram(ann.corpus, 25)));

  nlohmann::json metrics = nlohmann::json::object();
  metrics["mode"] = "indicator";
  metrics["beta"] = beta;
  metrics["annotation_ratio"] = ann.report.ratio;
  metrics["n_annotated"] = ann.report.n_annotated;
  const ModelWeights w = train_stage(ctx, ann.corpus, tmpl, metrics);
  const bool eval_indicator =
      policy == IndicatorPolicy::Always ||
      (policy == IndicatorPolicy::Auto && ann.report.n_annotated > 0);
  eval_stage(ctx, w, eval_indicator, metrics);
  return finish(ctx, "indicator",
                {{"seed_checkpoint", fs::absolute(seed_checkpoint).lexically_normal().string()},
                 {"seed_checkpoint_sha256", sha256_file(seed_checkpoint)}});
}

nlohmann::json compare(const RunManifest& vanilla, const RunManifest& indicator) {
  auto metrics_of = [](const RunManifest& m) {
    const auto& arts = m.data.at("artifacts");
    if (!arts.contains("metrics")) {
      fail(ErrorKind::MismatchedEvalSets, "run has no metric artifact");
    }
    const std::string p = m.run_dir() + "/" + arts["metrics"]["path"].get<std::string>();
    if (!fs::exists(p)) fail(ErrorKind::MismatchedEvalSets, "missing metric file " + p);
    return read_json(p);
  };
  if (vanilla.data.value("eval_set_hash", std::string{}) !=
      indicator.data.value("eval_set_hash", std::string{})) {
    fail(ErrorKind::MismatchedEvalSets, "runs were evaluated on different case sets");
  }
  const nlohmann::json v = metrics_of(vanilla);
  const nlohmann::json i = metrics_of(indicator);
  nlohmann::json report{{"vanilla", nlohmann::json::object()},
                        {"indicator", nlohmann::json::object()},
                        {"deltas", nlohmann::json::object()},
                        {"flags", nlohmann::json::array()},
                        {"beta", i.value("beta", nlohmann::json())},
                        {"annotation_ratio", i.value("annotation_ratio", nlohmann::json())}};
  for (const char* key : {"nih_mean_recall", "qa_mean_containment"}) {
    if (!v.contains(key) || !i.contains(key)) {
      fail(ErrorKind::MismatchedEvalSets, std::string("metric '") + key + "' missing");
    }
    const double a = v.at(key).get<double>();
    const double b = i.at(key).get<double>();
    report["vanilla"][key] = a;
    report["indicator"][key] = b;
    report["deltas"][key] = b - a;
    if (b <= a) report["flags"].push_back(std::string(key) + "_not_improved");
  }
  return report;
}

void verify_manifest(const RunManifest& manifest) {
  for (const auto& [name, art] : manifest.data.at("artifacts").items()) {
    const std::string p = manifest.run_dir() + "/" + art.at("path").get<std::string>();
    if (!fs::exists(p)) fail(ErrorKind::CorruptArtifact, "missing artifact " + p);
    if (sha256_file(p) != art.at("sha256").get<std::string>()) {
      fail(ErrorKind::CorruptArtifact, "hash mismatch for " + p);
    }
  }
}

}  // namespace ctxscope
