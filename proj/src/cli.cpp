#include "ctxscope/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "ctxscope/checkpoint.hpp"
#include "ctxscope/corpus.hpp"
#include "ctxscope/dependency.hpp"
#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"
#include "ctxscope/nih.hpp"
#include "ctxscope/pipeline.hpp"
#include "ctxscope/probe.hpp"
#include "ctxscope/prompts.hpp"
#include "ctxscope/qa.hpp"
#include "ctxscope/training.hpp"

namespace ctxscope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Artifacts of one invocation. The manifest goes last, after every
// artifact has been written and hashed.
class Run {
 public:
  Run(std::string command, json options)
      : command_(std::move(command)),
        options_(std::move(options)),
        dir_(options_.at("out").get<std::string>()),
        started_(utc_timestamp()) {
    fs::create_directories(dir_);
    lock_.emplace(dir_);
    fs::remove(dir_ + "/manifest.json");
  }

  const json& opt(const char* key) const { return options_.at(key); }
  std::string str(const char* key) const { return opt(key).get<std::string>(); }
  std::string path(const std::string& rel) const { return dir_ + "/" + rel; }

  void put(const std::string& name, const std::string& rel, std::string_view bytes) {
    write_file(path(rel), bytes);
    record(name, rel);
  }
  void put_json(const std::string& name, const std::string& rel, const json& j) {
    put(name, rel, j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n");
  }
  void record(const std::string& name, const std::string& rel) {
    artifacts_[name] = {{"path", rel}, {"sha256", sha256_file(path(rel))}};
  }

  void finish() {
    json m{{"command", command_},
           {"config", options_},
           {"config_hash", sha256_hex(options_.dump())},
           {"run_dir", dir_},
           {"artifacts", artifacts_},
           {"timestamps", {{"started", started_}, {"finished", utc_timestamp()}}}};
    if (options_.contains("seed")) m["seed"] = options_["seed"];
    write_json(path("manifest.json"), m);
  }

 private:
  std::string command_;
  json options_;
  std::string dir_;
  std::string started_;
  json artifacts_ = json::object();
  std::optional<DirLock> lock_;
};

struct Command {
  std::string name;
  std::string help;
  json defaults;  // option name -> default; the JSON type fixes the option type
  std::set<std::string> required;  // string options that must be non-empty
  std::set<std::string> paths;  // resolved to absolute paths
  std::function<void(const json&)> check;  // extra usage validation
  std::function<void(Run&)> run;  // non-null unless the command manages its own directory
  std::function<void(const json&)> run_custom;
};

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

json coerce(const std::string& key, const json& proto, const json& value) {
  const bool ok = proto.is_boolean()  ? value.is_boolean()
                  : proto.is_string() ? value.is_string()
                  : proto.is_number_float() ? value.is_number()
                  : proto.is_number_integer() ? value.is_number_integer()
                                              : false;
  if (!ok) throw UsageError("option '" + key + "' has the wrong type");
  if (proto.is_number_float()) return value.get<double>();
  return value;
}

json parse_flag(const std::string& key, const json& proto, const std::string& text) {
  if (proto.is_string()) return text;
  if (proto.is_number_integer()) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size()) {
      throw UsageError("--" + dashed(key) + " expects an integer");
    }
    return v;
  }
  double v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw UsageError("--" + dashed(key) + " expects a number");
  }
  return v;
}

std::string artifact_root() {
  if (const char* home = std::getenv("CTXSCOPE_HOME"); home && *home) return home;
  return (fs::current_path() / "ctxscope_runs").string();
}

std::string absolute(const std::string& p) {
  return fs::absolute(p).lexically_normal().string();
}

std::vector<Conversation> load_corpus(const Run& run, const char* key = "corpus") {
  return read_corpus(run.str(key)).conversations;
}

TemplateSpec template_of(const Run& run) { return resolve_template(run.str("template")); }

std::string pick_format(const std::map<std::string, std::string>& formats,
                        const std::string& name) {
  const auto it = formats.find(name);
  if (it == formats.end()) fail(ErrorKind::InvalidArgument, "unknown prompt format '" + name + "'");
  return it->second;
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw UsageError("--alphas expects a comma-separated list of numbers");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--alphas is empty");
  return out;
}

std::optional<int> layer_of(const Run& run) {
  const int layer = run.opt("layer").get<int>();
  if (layer < 0) return std::nullopt;
  return layer;
}

// NIH grid and setup shared by `nih` and `steer`.
struct NihPlan {
  std::vector<NihCase> cases;
  NihSetup setup;
  NihOptions options;
};

NihPlan nih_plan(const Run& run) {
  NihPlan p;
  GridSpec g;
  g.min_len = run.opt("min_len").get<std::size_t>();
  g.max_len = run.opt("max_len").get<std::size_t>();
  g.n_lens = run.opt("n_lens").get<std::size_t>();
  g.n_depths = run.opt("n_depths").get<std::size_t>();
  p.setup.tmpl = template_of(run);
  p.setup.haystack = load_haystack(data_dir() + "/haystack.txt");
  p.setup.format = pick_format(PromptFormats::bundled().nih, run.str("format"));
  p.setup.indicator = run.opt("indicator").get<bool>();
  NihCase base;
  base.template_id = p.setup.tmpl.name;
  base.response_prefix = run.opt("response_prefix").get<bool>();
  p.cases = build_grid(g, base);
  p.options.gen_len = run.opt("gen_len").get<std::size_t>();
  p.options.window = run.opt("window").get<std::size_t>();
  return p;
}

// Retrieval heads from a heads file, or probed on the first grid case that
// fits the model window.
HeadSelection nih_selection(const Run& run, const ModelWeights& w, const NihPlan& p) {
  if (!run.str("heads").empty()) return HeadSelection::from_json(read_json(run.str("heads")));
  const auto limit = static_cast<std::size_t>(w.config.max_seq_len);
  for (const NihCase& c : p.cases) {
    const BuiltCase b = build_case(c, p.setup);
    if (b.prompt.size() > limit) continue;
    const ForwardResult fr = forward(b.prompt.tokens, w, true);
    HeadSelection s = select_heads(*fr.attention, role_mask(b.prompt, kUserRoles));
    s.probe_id = fmt::format("nih-{}-{}", c.context_len, format_double(c.depth));
    return s;
  }
  fail(ErrorKind::SequenceTooLong, "no grid case fits the model window for head probing");
}

const json kNihDefaults{
    {"checkpoint", ""}, {"min_len", 200},       {"max_len", 4000},
    {"n_lens", 20},     {"n_depths", 20},       {"template", "chat"},
    {"format", "context"}, {"response_prefix", false}, {"indicator", false},
    {"alpha", 1.0},     {"heads", ""},          {"gen_len", 50},
    {"window", 100}};

std::vector<Command> commands() {
  std::vector<Command> cmds;

  cmds.push_back({"tokenize", "Byte-level token ids of a text",
                  {{"text", ""}, {"input", ""}},
                  {},
                  {"input"},
                  [](const json& o) {
                    if (o["text"].get<std::string>().empty() ==
                        o["input"].get<std::string>().empty()) {
                      throw UsageError("give exactly one of --text and --input");
                    }
                  },
                  [](Run& run) {
                    const std::string text =
                        run.str("input").empty() ? run.str("text") : read_file(run.str("input"));
                    const TokenizerSpec tok = TokenizerSpec::standard();
                    const auto ids = tokenize(text, tok);
                    run.put_json("tokens", "tokens.json",
                                 {{"n_tokens", ids.size()}, {"tokens", ids},
                                  {"vocab_size", tok.vocab_size()}});
                  },
                  {}});

  cmds.push_back({"render", "Render a corpus through a chat template",
                  {{"corpus", ""}, {"template", "chat"}, {"response_prefix", false}},
                  {"corpus"},
                  {"corpus"},
                  {},
                  [](Run& run) {
                    const TemplateSpec tmpl = template_of(run);
                    const bool rp = run.opt("response_prefix").get<bool>();
                    const TokenizerSpec tok = TokenizerSpec::standard();
                    std::string out;
                    for (const auto& conv : load_corpus(run)) {
                      const AnnotatedSequence seq = render(conv, tmpl, tok, rp);
                      json roles = json::array();
                      for (Role r : seq.roles) roles.push_back(to_string(r));
                      out += json{{"id", conv.id},
                                  {"text", render_text(conv, tmpl, rp)},
                                  {"tokens", seq.tokens},
                                  {"roles", roles}}
                                 .dump() +
                             "\n";
                    }
                    run.put("rendered", "rendered.jsonl", out);
                  },
                  {}});

  cmds.push_back({"train", "Supervised fine-tuning on assistant tokens",
                  {{"corpus", ""}, {"template", "chat"}, {"init_checkpoint", ""},
                   {"n_layers", 2}, {"n_heads", 4}, {"d_model", 64},
                   {"max_seq_len", 512}, {"positional", "rotary"}, {"seed", 1},
                   {"steps", -1}, {"batch_size", 4}, {"lr", 2e-3}, {"clip", 1.0},
                   {"truncate_len", 4096}},
                  {"corpus"},
                  {"corpus", "init_checkpoint"},
                  {},
                  [](Run& run) {
                    ModelConfig mc = ModelConfig::from_json(
                        {{"n_layers", run.opt("n_layers")}, {"n_heads", run.opt("n_heads")},
                         {"d_model", run.opt("d_model")}, {"max_seq_len", run.opt("max_seq_len")},
                         {"vocab_size", TokenizerSpec::standard().vocab_size()},
                         {"positional", run.opt("positional")}, {"rng_seed", run.opt("seed")}});
                    std::optional<ModelWeights> init;
                    if (!run.str("init_checkpoint").empty()) {
                      init = load_checkpoint(run.str("init_checkpoint"));
                      mc = init->config;
                    } else {
                      init = ModelWeights::init(mc);
                    }
                    TrainConfig tc;
                    if (run.opt("steps").get<long long>() >= 0) {
                      tc.steps = run.opt("steps").get<std::size_t>();
                    }
                    tc.batch_size = run.opt("batch_size").get<std::size_t>();
                    tc.lr = run.opt("lr").get<double>();
                    tc.clip = run.opt("clip").get<double>();
                    tc.seed = run.opt("seed").get<std::uint64_t>();
                    tc.validate();
                    const TemplateSpec tmpl = template_of(run);
                    const std::size_t truncate_len =
                        std::min(run.opt("truncate_len").get<std::size_t>(),
                                 static_cast<std::size_t>(mc.max_seq_len));
                    std::vector<Example> examples;
                    for (const auto& conv : load_corpus(run)) {
                      examples.push_back(
                          make_example(conv, tmpl, TokenizerSpec::standard(), truncate_len));
                    }
                    const TrainResult r = train(examples, mc, tc, &*init);
                    save_checkpoint(run.path("checkpoints/model.bin"), r.weights);
                    run.record("checkpoint", "checkpoints/model.bin");
                    write_loss_trace(run.path("checkpoints/loss.csv"), r.loss_trace);
                    run.record("loss_trace", "checkpoints/loss.csv");
                    const double before = batch_loss(*init, examples);
                    const double after = batch_loss(r.weights, examples);
                    run.put_json("train_summary", "train_summary.json",
                                 {{"n_examples", examples.size()},
                                  {"steps", r.loss_trace.size()},
                                  {"n_params", r.weights.n_params()},
                                  {"loss_initial", before},
                                  {"loss_final", after}});
                  },
                  {}});

  cmds.push_back({"generate", "Greedy continuation of one user message",
                  {{"checkpoint", ""}, {"prompt", ""}, {"template", "chat"},
                   {"max_new", 50}, {"indicator", false}, {"response_prefix", false},
                   {"alpha", 1.0}, {"heads", ""}},
                  {"checkpoint", "prompt"},
                  {"checkpoint", "heads"},
                  {},
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    const TokenizerSpec tok = TokenizerSpec::standard();
                    Conversation conv;
                    conv.id = "prompt";
                    conv.turns.push_back(
                        {Speaker::User, run.str("prompt"), run.opt("indicator").get<bool>()});
                    const AnnotatedSequence seq =
                        render(conv, template_of(run), tok, run.opt("response_prefix").get<bool>());
                    const double alpha = run.opt("alpha").get<double>();
                    std::optional<SteeringSpec> steer;
                    const std::vector<bool> user = role_mask(seq, kUserRoles);
                    if (alpha != 1.0) {
                      HeadSelection sel;
                      if (!run.str("heads").empty()) {
                        sel = HeadSelection::from_json(read_json(run.str("heads")));
                      } else {
                        const ForwardResult fr = forward(seq.tokens, w, true);
                        sel = select_heads(*fr.attention, user);
                        sel.probe_id = conv.id;
                      }
                      steer = steering_for(sel, alpha, user);
                    }
                    const auto ids = generate(w, seq.tokens, run.opt("max_new").get<std::size_t>(),
                                              tok.eos(), steer ? &*steer : nullptr);
                    run.put_json("generation", "generation.json",
                                 {{"prompt_tokens", seq.size()},
                                  {"output_tokens", ids},
                                  {"output", detokenize(ids, tok)}});
                  },
                  {}});

  cmds.push_back({"nih", "Needle-in-a-haystack recall grid",
                  kNihDefaults,
                  {"checkpoint"},
                  {"checkpoint", "heads"},
                  {},
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    NihPlan p = nih_plan(run);
                    p.options.alpha = run.opt("alpha").get<double>();
                    if (p.options.alpha != 1.0) {
                      p.options.selection = nih_selection(run, w, p);
                      run.put_json("heads", "heads.json", p.options.selection->to_json());
                    }
                    const TransformerGenerator gen(w, TokenizerSpec::standard().eos());
                    const NihReport r = run_nih(gen, p.cases, p.setup, p.options);
                    run.put("nih_heatmap", "nih_heatmap.csv", r.heatmap_csv());
                    run.put("nih_cases", "nih_cases.csv", r.cases_csv());
                    run.put_json("nih_summary", "nih_summary.json", r.summary());
                  },
                  {}});

  json steer_defaults = kNihDefaults;
  steer_defaults["min_len"] = 100;
  steer_defaults["max_len"] = 300;
  steer_defaults["n_lens"] = 3;
  steer_defaults["n_depths"] = 3;
  steer_defaults.erase("alpha");
  steer_defaults["alphas"] = "0.01,0.1,0.3,0.5,0.7,0.9,1";
  cmds.push_back({"steer", "Sweep the steering strength over an NIH grid",
                  steer_defaults,
                  {"checkpoint"},
                  {"checkpoint", "heads"},
                  [](const json& o) { parse_alphas(o["alphas"].get<std::string>()); },
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    const NihPlan p = nih_plan(run);
                    const HeadSelection sel = nih_selection(run, w, p);
                    const TransformerGenerator gen(w, TokenizerSpec::standard().eos());
                    const SweepResult r = sweep_alpha(gen, p.cases, p.setup,
                                                      parse_alphas(run.str("alphas")), sel,
                                                      p.options);
                    run.put_json("heads", "heads.json", sel.to_json());
                    run.put("sweep", "sweep.csv", r.csv());
                    run.put_json("sweep_summary", "sweep_summary.json",
                                 {{"best_alpha", r.best_alpha}});
                  },
                  {}});

  cmds.push_back({"probe", "Role allocation shifts and layer agreement",
                  {{"checkpoint", ""}, {"corpus", ""}, {"template", "chat"},
                   {"layer", -1}, {"response_prefix", false}, {"top_fraction", 0.1}},
                  {"checkpoint", "corpus"},
                  {"checkpoint", "corpus"},
                  {},
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    const auto corpus = load_corpus(run);
                    const TemplateSpec tmpl = template_of(run);
                    const int layer = layer_of(run).value_or(w.config.n_layers / 2);
                    const AllocationBatch batch =
                        allocation_batch(w, corpus, tmpl, layer, TokenizerSpec::standard(),
                                         run.opt("response_prefix").get<bool>());
                    std::vector<std::vector<DependencyRecord>> per_layer;
                    for (int l = 0; l < w.config.n_layers; ++l) {
                      ScoreOptions so;
                      so.layer = l;
                      so.tmpl = tmpl;
                      per_layer.push_back(score_dataset(corpus, w, so));
                    }
                    run.put("allocation", "allocation.csv", batch.csv());
                    run.put("agreement", "agreement.csv",
                            matrix_csv(layer_agreement(per_layer,
                                                       run.opt("top_fraction").get<double>())));
                    run.put_json("allocation_summary", "allocation_summary.json",
                                 {{"layer", layer},
                                  {"mean_d_user", batch.mean_d_user},
                                  {"mean_d_assistant", batch.mean_d_assistant}});
                  },
                  {}});

  cmds.push_back({"score", "Context-dependency score per response",
                  {{"checkpoint", ""}, {"corpus", ""}, {"template", "chat"},
                   {"layer", -1}, {"head_mode", "per-token-max"}, {"fixed_head", 0}},
                  {"checkpoint", "corpus"},
                  {"checkpoint", "corpus"},
                  [](const json& o) {
                    const auto m = o["head_mode"].get<std::string>();
                    if (m != "per-token-max" && m != "fixed-head") {
                      throw UsageError("--head-mode must be per-token-max or fixed-head");
                    }
                  },
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    ScoreOptions so;
                    so.layer = layer_of(run);
                    so.tmpl = template_of(run);
                    so.head_mode = run.str("head_mode") == "fixed-head" ? HeadMode::FixedHead
                                                                        : HeadMode::PerTokenMax;
                    so.fixed_head = run.opt("fixed_head").get<int>();
                    run.put("scores", "scores.jsonl",
                            records_to_jsonl(score_dataset(load_corpus(run), w, so)));
                  },
                  {}});

  cmds.push_back({"annotate", "Flag context-dependent instructions above beta",
                  {{"corpus", ""}, {"scores", ""}, {"beta", 0.6}, {"bin_width", 25}},
                  {"corpus", "scores"},
                  {"corpus", "scores"},
                  {},
                  [](Run& run) {
                    const AnnotationResult a =
                        annotate(load_corpus(run), parse_records_jsonl(read_file(run.str("scores"))),
                                 run.opt("beta").get<double>());
                    run.put("annotated_corpus", "annotated.jsonl", corpus_to_jsonl(a.corpus));
                    run.put("scores", "scores.jsonl", records_to_jsonl(a.records));
                    run.put_json("ratio", "ratio.json", a.report.to_json());
                    run.put("instruction_histogram", "instruction_hist.csv",
                            histogram_csv(instruction_histogram(
                                a.corpus, run.opt("bin_width").get<std::size_t>())));
                  },
                  {}});

  cmds.push_back({"stats", "Preprocess a corpus and report its statistics",
                  {{"corpus", ""}, {"template", "null"}, {"truncate_len", 4096},
                   {"filter_refusals", true}},
                  {"corpus"},
                  {"corpus"},
                  {},
                  [](Run& run) {
                    const ParsedCorpus parsed = read_corpus(run.str("corpus"));
                    PreprocessOptions po;
                    po.tmpl = template_of(run);
                    po.truncate_len = run.opt("truncate_len").get<std::size_t>();
                    if (!run.opt("filter_refusals").get<bool>()) po.refusal_phrases.clear();
                    Preprocessed p = preprocess(parsed.conversations, po);
                    p.stats.n_system_dropped += parsed.n_system_dropped;
                    run.put("corpus", "preprocessed.jsonl", corpus_to_jsonl(p.corpus));
                    json stats = p.stats.to_json();
                    stats["input"] =
                        dataset_stats(parsed.conversations, po.tmpl, TokenizerSpec::standard())
                            .to_json();
                    run.put_json("stats", "stats.json", stats);
                  },
                  {}});

  cmds.push_back({"qa", "Containment score on contextual QA cases",
                  {{"checkpoint", ""}, {"cases", ""}, {"template", "chat"},
                   {"style", "instruction"}, {"indicator", false}, {"gen_len", 100}},
                  {"checkpoint", "cases"},
                  {"checkpoint", "cases"},
                  {},
                  [](Run& run) {
                    const ModelWeights w = load_checkpoint(run.str("checkpoint"));
                    QaSetup s;
                    s.tmpl = template_of(run);
                    s.format = pick_format(PromptFormats::bundled().qa, run.str("style"));
                    s.indicator = run.opt("indicator").get<bool>();
                    s.gen_len = run.opt("gen_len").get<std::size_t>();
                    const TransformerGenerator gen(w, s.tok.eos());
                    const QaReport r = run_qa(gen, parse_qa_jsonl(read_file(run.str("cases"))), s);
                    run.put("qa_results", "qa_results.csv", r.csv());
                    run.put_json("qa_summary", "qa_summary.json", r.summary());
                  },
                  {}});

  json pipe_defaults = pipeline_defaults();
  pipe_defaults["mode"] = "vanilla";
  pipe_defaults["seed_checkpoint"] = "";
  cmds.push_back({"pipeline run", "Vanilla, indicator or full fine-tuning runs",
                  pipe_defaults,
                  {},
                  {"seed_checkpoint"},
                  [](const json& o) {
                    const auto mode = o["mode"].get<std::string>();
                    if (mode != "vanilla" && mode != "indicator" && mode != "full") {
                      throw UsageError("--mode must be vanilla, indicator or full");
                    }
                    if (mode == "indicator" && o["seed_checkpoint"].get<std::string>().empty()) {
                      throw UsageError("indicator mode needs --seed-checkpoint");
                    }
                  },
                  {},
                  [](const json& o) {
                    json cfg = o;
                    const auto mode = cfg["mode"].get<std::string>();
                    const auto seed_ckpt = cfg["seed_checkpoint"].get<std::string>();
                    const auto out = cfg["out"].get<std::string>();
                    for (const char* k : {"mode", "seed_checkpoint", "out"}) cfg.erase(k);
                    if (mode == "vanilla") {
                      run_vanilla(cfg, out);
                    } else if (mode == "indicator") {
                      run_indicator(cfg, out, seed_ckpt);
                    } else {
                      fs::create_directories(out);
                      const DirLock lock(out);
                      fs::remove(out + "/manifest.json");
                      const std::string started = utc_timestamp();
                      const RunManifest v = run_vanilla(cfg, out + "/vanilla");
                      const RunManifest i = run_indicator(
                          cfg, out + "/indicator", v.data.at("checkpoint_path").get<std::string>());
                      const json report = compare(v, i);
                      write_json(out + "/comparison.json", report);
                      json m{{"mode", "full"},
                             {"config", o},
                             {"config_hash", sha256_hex(o.dump())},
                             {"seed", o.at("seed")},
                             {"run_dir", out},
                             {"artifacts",
                              {{"vanilla_manifest",
                                {{"path", "vanilla/manifest.json"},
                                 {"sha256", sha256_file(out + "/vanilla/manifest.json")}}},
                               {"indicator_manifest",
                                {{"path", "indicator/manifest.json"},
                                 {"sha256", sha256_file(out + "/indicator/manifest.json")}}},
                               {"comparison",
                                {{"path", "comparison.json"},
                                 {"sha256", sha256_file(out + "/comparison.json")}}}}},
                             {"timestamps", {{"started", started}, {"finished", utc_timestamp()}}}};
                      write_json(out + "/manifest.json", m);
                    }
                  }});

  cmds.push_back({"compare", "Metric deltas between a vanilla and an indicator run",
                  {{"vanilla", ""}, {"indicator", ""}},
                  {"vanilla", "indicator"},
                  {"vanilla", "indicator"},
                  {},
                  [](Run& run) {
                    auto load = [](const std::string& p) {
                      return RunManifest::load(fs::is_directory(p) ? p + "/manifest.json" : p);
                    };
                    run.put_json("comparison", "comparison.json",
                                 compare(load(run.str("vanilla")), load(run.str("indicator"))));
                  },
                  {}});
  return cmds;
}

// Defaults, then the flat config file, then flags.
json resolve_options(const Command& cmd, const std::string& config_path,
                     const std::map<std::string, std::string>& flag_text,
                     const std::map<std::string, bool>& flag_bool) {
  json opts = cmd.defaults;
  if (!config_path.empty()) {
    json file;
    try {
      file = read_json(config_path);
    } catch (const Error& e) {
      throw UsageError("config file: " + std::string(e.what()));
    }
    if (!file.is_object()) throw UsageError("config file must hold a flat JSON object");
    for (const auto& [k, v] : file.items()) {
      if (k == "out") {
        if (!v.is_string()) throw UsageError("option 'out' has the wrong type");
        opts["out"] = v;
        continue;
      }
      if (!cmd.defaults.contains(k)) throw UsageError("unknown config key '" + k + "'");
      opts[k] = coerce(k, cmd.defaults[k], v);
    }
  }
  for (const auto& [k, text] : flag_text) {
    opts[k] = k == "out" ? json(text) : parse_flag(k, cmd.defaults[k], text);
  }
  for (const auto& [k, v] : flag_bool) opts[k] = v;

  for (const auto& k : cmd.required) {
    if (opts[k].get<std::string>().empty()) throw UsageError("--" + dashed(k) + " is required");
  }
  for (const auto& k : cmd.paths) {
    const auto v = opts[k].get<std::string>();
    if (!v.empty()) opts[k] = absolute(v);
  }
  if (opts.contains("template")) {
    const auto t = opts["template"].get<std::string>();
    if (t.find('/') != std::string::npos || t.ends_with(".json")) opts["template"] = absolute(t);
  }
  std::string name = cmd.name;
  std::replace(name.begin(), name.end(), ' ', '-');
  opts["out"] = absolute(opts.contains("out") ? opts["out"].get<std::string>()
                                              : artifact_root() + "/" + name);
  if (cmd.check) cmd.check(opts);
  return opts;
}

void report_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> cmds = commands();
  CLI::App app{"Context-awareness experiments on a small transformer", "ctxscope"};
  app.require_subcommand(1);
  CLI::App* pipeline = app.add_subcommand("pipeline", "End-to-end fine-tuning runs");
  pipeline->require_subcommand(1);

  struct Bound {
    const Command* cmd;
    CLI::App* app;
    std::string config;
    std::map<std::string, std::string> text;
    std::map<std::string, CLI::Option*> text_opts;
    std::map<std::string, bool> bools;
    std::map<std::string, std::pair<CLI::Option*, CLI::Option*>> bool_opts;
  };
  std::vector<std::unique_ptr<Bound>> bound;
  for (const Command& cmd : cmds) {
    auto b = std::make_unique<Bound>();
    b->cmd = &cmd;
    const bool nested = cmd.name.starts_with("pipeline ");
    b->app = nested ? pipeline->add_subcommand(cmd.name.substr(9), cmd.help)
                    : app.add_subcommand(cmd.name, cmd.help);
    b->app->add_option("--config", b->config, "Flat JSON config file");
    b->text_opts["out"] = b->app->add_option("--out", b->text["out"], "Output directory");
    for (const auto& [k, v] : cmd.defaults.items()) {
      const std::string flag = "--" + dashed(k);
      if (v.is_boolean()) {
        bool& slot = b->bools[k];
        auto* on = b->app->add_flag(flag, slot);
        auto* off = b->app->add_flag_function(
            "--no-" + dashed(k), [&slot](std::int64_t) { slot = false; });
        b->bool_opts[k] = {on, off};
      } else {
        b->text_opts[k] = b->app->add_option(flag, b->text[k], "default " + v.dump());
      }
    }
    bound.push_back(std::move(b));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 2;
  }

  for (const auto& b : bound) {
    if (!b->app->parsed()) continue;
    try {
      std::map<std::string, std::string> text;
      for (const auto& [k, opt] : b->text_opts) {
        if (opt->count() > 0) text[k] = b->text[k];
      }
      std::map<std::string, bool> bools;
      for (const auto& [k, opts] : b->bool_opts) {
        if (opts.first->count() > 0 || opts.second->count() > 0) bools[k] = b->bools[k];
      }
      const json options = resolve_options(*b->cmd, b->config, text, bools);
      if (b->cmd->run_custom) {
        b->cmd->run_custom(options);
      } else {
        Run run(b->cmd->name, options);
        b->cmd->run(run);
        run.finish();
      }
      out << options.at("out").get<std::string>() << "/manifest.json\n";
      return 0;
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n" << b->app->help();
      return 2;
    } catch (const Error& e) {
      report_error(err, to_string(e.kind()), e.what());
      return 1;
    } catch (const std::exception& e) {
      report_error(err, "Internal", e.what());
      return 1;
    }
  }
  err << app.help();
  return 2;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace ctxscope::cli
