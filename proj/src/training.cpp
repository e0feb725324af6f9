#include "ctxscope/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ctxscope/error.hpp"
#include "ctxscope/io.hpp"
#include "model_internal.hpp"

namespace ctxscope {

namespace {

// Softmax cross-entropy of one row; writes d(loss)/d(logits) scaled by
// `scale` into `drow` when given.
double row_xent(std::span<const double> row, TokenId target,
                std::span<double> drow, double scale) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  if (!drow.empty()) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      drow[i] = std::exp(row[i] - log_z) * scale;
    }
    drow[static_cast<std::size_t>(target)] -= scale;
  }
  return log_z - row[static_cast<std::size_t>(target)];
}

std::size_t count_masked(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

double example_loss(const ModelWeights& w, const Example& ex,
                    ModelWeights* grads, double weight) {
  detail::ForwardCache cache;
  detail::forward_cached(ex.inputs, w, cache, nullptr);
  const std::size_t n = count_masked(ex.loss_mask);
  if (n == 0) fail(ErrorKind::EmptyLossMask, "example has no masked targets");
  const double scale = weight / static_cast<double>(n);
  Tensor dlogits;
  if (grads) dlogits = Tensor(cache.logits.rows, cache.logits.cols);
  double total = 0.0;
  for (std::size_t t = 0; t < ex.targets.size(); ++t) {
    if (!ex.loss_mask[t]) continue;
    std::span<double> drow;
    if (grads) drow = dlogits.row(t);
    total += row_xent(cache.logits.row(t), ex.targets[t], drow, scale);
  }
  if (grads) detail::backward(cache, dlogits, w, *grads);
  return total / static_cast<double>(n);
}

}  // namespace

Example make_example(const Conversation& conv, const TemplateSpec& tmpl,
                     const TokenizerSpec& tok, std::size_t truncate_len) {
  const AnnotatedSequence seq = render(conv, tmpl, tok, false);
  std::vector<bool> learn(seq.size(), false);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    learn[i] = seq.roles[i] == Role::Assistant;
  }
  for (const Span& s : seq.spans) {
    if (s.kind != SpanKind::AssistantSuffix) continue;
    for (std::size_t i = s.begin; i < s.end; ++i) learn[i] = true;
  }
  std::size_t n = seq.size();
  Example ex;
  if (truncate_len > 0 && n > truncate_len) {
    n = truncate_len;
    ex.truncated = true;
  }
  if (n < 2) return ex;
  ex.inputs.assign(seq.tokens.begin(), seq.tokens.begin() + (n - 1));
  ex.targets.assign(seq.tokens.begin() + 1, seq.tokens.begin() + n);
  ex.loss_mask.assign(learn.begin() + 1, learn.begin() + n);
  return ex;
}

double loss_sft(const Tensor& logits, std::span<const TokenId> targets,
                const std::vector<bool>& loss_mask) {
  if (targets.size() != logits.rows || loss_mask.size() != logits.rows) {
    fail(ErrorKind::InvalidArgument, "logits, targets and mask disagree in length");
  }
  const std::size_t n = count_masked(loss_mask);
  if (n == 0) fail(ErrorKind::EmptyLossMask, "no masked target positions");
  double total = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!loss_mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= logits.cols) {
      fail(ErrorKind::TokenOutOfVocab, "target id outside vocabulary");
    }
    total += row_xent(logits.row(t), targets[t], {}, 0.0);
  }
  return total / static_cast<double>(n);
}

double loss_and_grad(const ModelWeights& weights,
                     const std::vector<Example>& batch, ModelWeights& grads) {
  if (batch.empty()) fail(ErrorKind::EmptyCorpus, "empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Example& ex : batch) {
    total += example_loss(weights, ex, &grads, weight);
  }
  return total * weight;
}

ModelWeights grad(const ModelWeights& weights, const std::vector<Example>& batch) {
  ModelWeights g = ModelWeights::zeros(weights.config);
  loss_and_grad(weights, batch, g);
  return g;
}

double batch_loss(const ModelWeights& weights, const std::vector<Example>& batch) {
  if (batch.empty()) fail(ErrorKind::EmptyCorpus, "empty batch");
  double total = 0.0;
  for (const Example& ex : batch) total += example_loss(weights, ex, nullptr, 1.0);
  return total / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorKind::InvalidArgument, "lr must be positive");
  if (batch_size == 0) fail(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail(ErrorKind::InvalidArgument, "adam betas must lie in [0, 1)");
  }
}

TrainResult train(const std::vector<Example>& corpus, const ModelConfig& model,
                  const TrainConfig& config, const ModelWeights* init) {
  config.validate();
  std::vector<const Example*> usable;
  for (const Example& ex : corpus) {
    if (count_masked(ex.loss_mask) > 0) usable.push_back(&ex);
  }
  if (usable.empty()) fail(ErrorKind::EmptyCorpus, "no trainable examples");

  TrainResult out{init ? *init : ModelWeights::init(model), {}};
  ModelWeights& w = out.weights;
  const std::size_t n = usable.size();
  const std::size_t steps =
      config.steps.value_or((n + config.batch_size - 1) / config.batch_size);

  ModelWeights m = ModelWeights::zeros(w.config);
  ModelWeights v = ModelWeights::zeros(w.config);
  ModelWeights g = ModelWeights::zeros(w.config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  std::vector<Example> batch;
  for (std::size_t step = 0; step < steps; ++step) {
    batch.clear();
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(*usable[order[cursor++]]);
    }
    g.for_each([](const std::string&, Tensor& t) { t.zero(); });
    out.loss_trace.push_back(loss_and_grad(w, batch, g));

    double norm2 = 0.0;
    g.for_each([&norm2](const std::string&, const Tensor& t) {
      for (double x : t.data) norm2 += x * x;
    });
    const double norm = std::sqrt(norm2);
    const double clip_scale =
        (config.clip > 0.0 && norm > config.clip) ? config.clip / norm : 1.0;

    const double t1 = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(config.beta1, t1);
    const double c2 = 1.0 - std::pow(config.beta2, t1);
    std::vector<Tensor*> ws, ms, vs, gs;
    w.for_each([&](const std::string&, Tensor& t) { ws.push_back(&t); });
    m.for_each([&](const std::string&, Tensor& t) { ms.push_back(&t); });
    v.for_each([&](const std::string&, Tensor& t) { vs.push_back(&t); });
    g.for_each([&](const std::string&, Tensor& t) { gs.push_back(&t); });
    for (std::size_t i = 0; i < ws.size(); ++i) {
      auto& wd = ws[i]->data;
      auto& md = ms[i]->data;
      auto& vd = vs[i]->data;
      const auto& gd = gs[i]->data;
      for (std::size_t j = 0; j < wd.size(); ++j) {
        const double gj = gd[j] * clip_scale;
        md[j] = config.beta1 * md[j] + (1.0 - config.beta1) * gj;
        vd[j] = config.beta2 * vd[j] + (1.0 - config.beta2) * gj * gj;
        wd[j] -= config.lr * (md[j] / c1) / (std::sqrt(vd[j] / c2) + config.adam_eps);
      }
    }
  }
  return out;
}

void write_loss_trace(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << i << "," << format_double(trace[i]) << "\n";
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

}  // namespace ctxscope
