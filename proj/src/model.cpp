#include "ctxscope/model.hpp"

#include <cmath>
#include <random>

#include "ctxscope/error.hpp"
#include "ctxscope/kernels.hpp"
#include "ctxscope/steering.hpp"
#include "model_internal.hpp"

namespace ctxscope {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
}

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) +
         0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

void rms_norm(const Tensor& x, const Tensor& gain, double eps, Tensor& y,
              std::vector<double>& inv_rms) {
  const std::size_t T = x.rows;
  const std::size_t d = x.cols;
  y = Tensor(T, d);
  inv_rms.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += x(t, i) * x(t, i);
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
    inv_rms[t] = inv;
    for (std::size_t i = 0; i < d; ++i) y(t, i) = gain.data[i] * x(t, i) * inv;
  }
}

void rms_norm_backward(const Tensor& x, const Tensor& gain,
                       const std::vector<double>& inv_rms, const Tensor& dy,
                       Tensor& dx, Tensor& dgain) {
  const std::size_t T = x.rows;
  const std::size_t d = x.cols;
  for (std::size_t t = 0; t < T; ++t) {
    const double inv = inv_rms[t];
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += gain.data[i] * dy(t, i) * x(t, i);
      dgain.data[i] += dy(t, i) * x(t, i) * inv;
    }
    const double coef = inv * inv * inv * dot / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
      dx(t, i) += inv * gain.data[i] * dy(t, i) - coef * x(t, i);
    }
  }
}

// Rotates consecutive pairs within each head by pos * base^(-2p/d_head).
// `sign` = -1 applies the inverse rotation (used for gradients).
void apply_rotary(Tensor& x, const ModelConfig& cfg, double sign,
                  std::size_t first_pos = 0) {
  const int H = cfg.n_heads;
  const int dh = cfg.d_head();
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (int p = 0; p < dh / 2; ++p) {
      const double freq =
          std::pow(cfg.rope_base, -2.0 * p / static_cast<double>(dh));
      const double theta = sign * static_cast<double>(first_pos + t) * freq;
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      for (int h = 0; h < H; ++h) {
        const std::size_t i0 = static_cast<std::size_t>(h * dh + 2 * p);
        const double a = x(t, i0);
        const double b = x(t, i0 + 1);
        x(t, i0) = a * c - b * s;
        x(t, i0 + 1) = a * s + b * c;
      }
    }
  }
}

void linear(const Tensor& x, const Tensor& w, Tensor& y) {
  y = Tensor(x.rows, w.rows);
  kernels::linear(x.data, w.data, y.data, x.rows, x.cols, w.rows);
}

void check_tokens(std::span<const TokenId> tokens, const ModelConfig& cfg) {
  if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    fail(ErrorKind::SequenceTooLong,
         "sequence of " + std::to_string(tokens.size()) +
             " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      fail(ErrorKind::TokenOutOfVocab,
           "token id " + std::to_string(t) + " outside vocabulary of " +
               std::to_string(cfg.vocab_size));
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::InvalidArgument, m); };
  if (n_layers < 1) bad("n_layers must be >= 1");
  if (n_heads < 1) bad("n_heads must be >= 1");
  if (d_model < 1 || d_model % n_heads != 0) {
    bad("d_model must be a positive multiple of n_heads");
  }
  if (positional == PositionalScheme::Rotary && d_head() % 2 != 0) {
    bad("rotary positions need an even d_head");
  }
  if (vocab_size < 1) bad("vocab_size must be >= 1");
  if (max_seq_len < 1) bad("max_seq_len must be >= 1");
  if (mlp_mult < 1) bad("mlp_mult must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_layers", n_layers},
          {"n_heads", n_heads},
          {"d_model", d_model},
          {"vocab_size", vocab_size},
          {"max_seq_len", max_seq_len},
          {"mlp_mult", mlp_mult},
          {"rng_seed", rng_seed},
          {"positional",
           positional == PositionalScheme::Rotary ? "rotary" : "learned"},
          {"rope_base", rope_base},
          {"norm_eps", norm_eps},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_model = j.value("d_model", c.d_model);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.mlp_mult = j.value("mlp_mult", c.mlp_mult);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  const std::string pos = j.value("positional", std::string{"rotary"});
  if (pos == "rotary") {
    c.positional = PositionalScheme::Rotary;
  } else if (pos == "learned") {
    c.positional = PositionalScheme::Learned;
  } else {
    fail(ErrorKind::InvalidArgument, "unknown positional scheme '" + pos + "'");
  }
  c.rope_base = j.value("rope_base", c.rope_base);
  c.norm_eps = j.value("norm_eps", c.norm_eps);
  c.init_std = j.value("init_std", c.init_std);
  c.validate();
  return c;
}

ModelWeights ModelWeights::zeros(const ModelConfig& config) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto V = static_cast<std::size_t>(config.vocab_size);
  const auto m = static_cast<std::size_t>(config.d_mlp());
  ModelWeights w;
  w.config = config;
  w.tok_embed = Tensor(V, d);
  if (config.positional == PositionalScheme::Learned) {
    w.pos_embed = Tensor(static_cast<std::size_t>(config.max_seq_len), d);
  }
  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& l : w.layers) {
    l.attn_norm = Tensor(1, d);
    l.wq = Tensor(d, d);
    l.wk = Tensor(d, d);
    l.wv = Tensor(d, d);
    l.wo = Tensor(d, d);
    l.mlp_norm = Tensor(1, d);
    l.w_up = Tensor(m, d);
    l.w_down = Tensor(d, m);
  }
  w.final_norm = Tensor(1, d);
  w.unembed = Tensor(V, d);
  return w;
}

ModelWeights ModelWeights::init(const ModelConfig& config) {
  ModelWeights w = zeros(config);
  std::mt19937_64 rng(config.rng_seed);
  const double std_in = config.init_std;
  const double std_out = config.init_std / std::sqrt(2.0 * config.n_layers);
  auto fill = [&rng](Tensor& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data) v = dist(rng);
  };
  w.for_each([&](const std::string& name, Tensor& t) {
    if (name.ends_with("norm")) {
      std::fill(t.data.begin(), t.data.end(), 1.0);
    } else if (name.ends_with(".wo") || name.ends_with(".w_down")) {
      fill(t, std_out);
    } else {
      fill(t, std_in);
    }
  });
  return w;
}

void ModelWeights::for_each(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("tok_embed", tok_embed);
  if (config.positional == PositionalScheme::Learned) fn("pos_embed", pos_embed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    auto& l = layers[i];
    fn(p + "attn_norm", l.attn_norm);
    fn(p + "wq", l.wq);
    fn(p + "wk", l.wk);
    fn(p + "wv", l.wv);
    fn(p + "wo", l.wo);
    fn(p + "mlp_norm", l.mlp_norm);
    fn(p + "w_up", l.w_up);
    fn(p + "w_down", l.w_down);
  }
  fn("final_norm", final_norm);
  fn("unembed", unembed);
}

void ModelWeights::for_each(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelWeights*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t ModelWeights::n_params() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

bool ModelWeights::all_finite() const {
  bool ok = true;
  for_each([&ok](const std::string&, const Tensor& t) {
    for (double v : t.data) ok = ok && std::isfinite(v);
  });
  return ok;
}

AttentionRecord::AttentionRecord(int n_layers, int n_heads, std::size_t seq_len)
    : n_layers_(n_layers),
      n_heads_(n_heads),
      seq_len_(seq_len),
      data_(static_cast<std::size_t>(n_layers) * n_heads * seq_len * seq_len,
            0.0) {}

void SteeringSpec::validate(const ModelConfig& config) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "steering alpha must lie in (0, 1]");
  }
  for (const auto& [layer, head] : targets) {
    if (layer < 0 || layer >= config.n_layers || head < 0 ||
        head >= config.n_heads) {
      fail(ErrorKind::InvalidArgument,
           "steering target (" + std::to_string(layer) + ", " +
               std::to_string(head) + ") outside model bounds");
    }
  }
}

namespace detail {

void forward_cached(std::span<const TokenId> tokens, const ModelWeights& w,
                    ForwardCache& cache, const SteeringSpec* steering) {
  const ModelConfig& cfg = w.config;
  check_tokens(tokens, cfg);
  if (steering) steering->validate(cfg);

  const std::size_t T = tokens.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const kernels::AttentionShape shape{T, static_cast<std::size_t>(cfg.n_heads),
                                      static_cast<std::size_t>(cfg.d_head())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));

  cache.tokens.assign(tokens.begin(), tokens.end());
  cache.layers.resize(w.layers.size());

  Tensor x(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    const auto e = w.tok_embed.row(static_cast<std::size_t>(tokens[t]));
    for (std::size_t i = 0; i < d; ++i) x(t, i) = e[i];
    if (cfg.positional == PositionalScheme::Learned) {
      const auto p = w.pos_embed.row(t);
      for (std::size_t i = 0; i < d; ++i) x(t, i) += p[i];
    }
  }

  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const LayerWeights& lw = w.layers[li];
    LayerCache& c = cache.layers[li];
    c.x_in = x;
    rms_norm(c.x_in, lw.attn_norm, cfg.norm_eps, c.h1, c.inv_rms1);
    linear(c.h1, lw.wq, c.q);
    linear(c.h1, lw.wk, c.k);
    linear(c.h1, lw.wv, c.v);
    if (cfg.positional == PositionalScheme::Rotary) {
      apply_rotary(c.q, cfg, 1.0);
      apply_rotary(c.k, cfg, 1.0);
    }
    c.probs.assign(shape.n_heads * T * T, 0.0);
    kernels::attention_probs(c.q.data, c.k.data, c.probs, shape, scale);

    if (steering) {
      for (const auto& [layer, head] : steering->targets) {
        if (static_cast<std::size_t>(layer) != li) continue;
        for (std::size_t qi = 0; qi < T; ++qi) {
          std::span<double> row(
              c.probs.data() + (static_cast<std::size_t>(head) * T + qi) * T,
              qi + 1);
          steer_row_inplace(row, steering->user_mask, steering->alpha);
        }
      }
    }

    c.mix = Tensor(T, d);
    kernels::attention_mix(c.probs, c.v.data, c.mix.data, shape);
    Tensor attn_out;
    linear(c.mix, lw.wo, attn_out);
    c.x_mid = c.x_in;
    for (std::size_t i = 0; i < c.x_mid.size(); ++i) {
      c.x_mid.data[i] += attn_out.data[i];
    }

    rms_norm(c.x_mid, lw.mlp_norm, cfg.norm_eps, c.h2, c.inv_rms2);
    linear(c.h2, lw.w_up, c.up);
    c.act = c.up;
    for (double& v : c.act.data) v = gelu(v);
    Tensor mlp_out;
    linear(c.act, lw.w_down, mlp_out);
    x = c.x_mid;
    for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += mlp_out.data[i];
  }

  cache.x_final = std::move(x);
  rms_norm(cache.x_final, w.final_norm, cfg.norm_eps, cache.hf, cache.inv_rmsf);
  linear(cache.hf, w.unembed, cache.logits);
}

void backward(const ForwardCache& cache, const Tensor& dlogits,
              const ModelWeights& w, ModelWeights& grads) {
  const ModelConfig& cfg = w.config;
  const std::size_t T = cache.tokens.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto m = static_cast<std::size_t>(cfg.d_mlp());
  const kernels::AttentionShape shape{T, static_cast<std::size_t>(cfg.n_heads),
                                      static_cast<std::size_t>(cfg.d_head())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));

  Tensor dhf(T, d);
  kernels::linear_backward(cache.hf.data, w.unembed.data, dlogits.data,
                           dhf.data, grads.unembed.data, T, d, V);
  Tensor dx(T, d);
  rms_norm_backward(cache.x_final, w.final_norm, cache.inv_rmsf, dhf, dx,
                    grads.final_norm);

  std::vector<double> dprobs;
  for (std::size_t li = w.layers.size(); li-- > 0;) {
    const LayerWeights& lw = w.layers[li];
    LayerWeights& lg = grads.layers[li];
    const LayerCache& c = cache.layers[li];

    // MLP branch; dx flows unchanged through the residual.
    Tensor dact(T, m);
    kernels::linear_backward(c.act.data, lw.w_down.data, dx.data, dact.data,
                             lg.w_down.data, T, m, d);
    for (std::size_t i = 0; i < dact.size(); ++i) {
      dact.data[i] *= gelu_grad(c.up.data[i]);
    }
    Tensor dh2(T, d);
    kernels::linear_backward(c.h2.data, lw.w_up.data, dact.data, dh2.data,
                             lg.w_up.data, T, d, m);
    rms_norm_backward(c.x_mid, lw.mlp_norm, c.inv_rms2, dh2, dx, lg.mlp_norm);

    // Attention branch.
    Tensor dmix(T, d);
    kernels::linear_backward(c.mix.data, lw.wo.data, dx.data, dmix.data,
                             lg.wo.data, T, d, d);
    dprobs.assign(shape.n_heads * T * T, 0.0);
    Tensor dq(T, d), dk(T, d), dv(T, d);
    kernels::attention_mix_backward(c.probs, c.v.data, dmix.data, dprobs,
                                    dv.data, shape);
    kernels::attention_probs_backward(c.probs, dprobs, c.q.data, c.k.data,
                                      dq.data, dk.data, shape, scale);
    if (cfg.positional == PositionalScheme::Rotary) {
      apply_rotary(dq, cfg, -1.0);
      apply_rotary(dk, cfg, -1.0);
    }
    Tensor dh1(T, d);
    kernels::linear_backward(c.h1.data, lw.wq.data, dq.data, dh1.data,
                             lg.wq.data, T, d, d);
    kernels::linear_backward(c.h1.data, lw.wk.data, dk.data, dh1.data,
                             lg.wk.data, T, d, d);
    kernels::linear_backward(c.h1.data, lw.wv.data, dv.data, dh1.data,
                             lg.wv.data, T, d, d);
    rms_norm_backward(c.x_in, lw.attn_norm, c.inv_rms1, dh1, dx, lg.attn_norm);
  }

  for (std::size_t t = 0; t < T; ++t) {
    auto ge = grads.tok_embed.row(static_cast<std::size_t>(cache.tokens[t]));
    for (std::size_t i = 0; i < d; ++i) ge[i] += dx(t, i);
    if (cfg.positional == PositionalScheme::Learned) {
      auto gp = grads.pos_embed.row(t);
      for (std::size_t i = 0; i < d; ++i) gp[i] += dx(t, i);
    }
  }
}

}  // namespace detail

ForwardResult forward(std::span<const TokenId> tokens,
                      const ModelWeights& weights, bool capture_attention,
                      const SteeringSpec* steering) {
  detail::ForwardCache cache;
  detail::forward_cached(tokens, weights, cache, steering);
  ForwardResult out;
  out.logits = std::move(cache.logits);
  if (capture_attention) {
    const ModelConfig& cfg = weights.config;
    AttentionRecord rec(cfg.n_layers, cfg.n_heads, tokens.size());
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto dst = rec.layer(l);
      const auto& src = cache.layers[static_cast<std::size_t>(l)].probs;
      std::copy(src.begin(), src.end(), dst.begin());
    }
    out.attention = std::move(rec);
  }
  return out;
}

namespace {

void append_row(Tensor& dst, const Tensor& row) {
  dst.data.insert(dst.data.end(), row.data.begin(), row.data.end());
  ++dst.rows;
}

// Key/value rows of every layer for the tokens decoded so far. One step
// repeats the full forward's arithmetic for the newest position only, in the
// same accumulation order, so its logits equal the full forward's last row.
class Decoder {
 public:
  Decoder(const ModelWeights& w, const detail::ForwardCache& prompt,
          const SteeringSpec* steering)
      : w_(w), steering_(steering) {
    for (const auto& c : prompt.layers) {
      k_.push_back(c.k);
      v_.push_back(c.v);
    }
  }

  std::size_t length() const { return k_.empty() ? 0 : k_[0].rows; }

  Tensor step(TokenId token) {
    const ModelConfig& cfg = w_.config;
    const std::size_t t = length();
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto H = static_cast<std::size_t>(cfg.n_heads);
    const auto dh = static_cast<std::size_t>(cfg.d_head());
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));

    Tensor x(1, d);
    const auto e = w_.tok_embed.row(static_cast<std::size_t>(token));
    for (std::size_t i = 0; i < d; ++i) x(0, i) = e[i];
    if (cfg.positional == PositionalScheme::Learned) {
      const auto p = w_.pos_embed.row(t);
      for (std::size_t i = 0; i < d; ++i) x(0, i) += p[i];
    }
    std::vector<double> inv;
    std::vector<double> row(t + 1);
    for (std::size_t li = 0; li < w_.layers.size(); ++li) {
      const LayerWeights& lw = w_.layers[li];
      Tensor h, q, k, v;
      rms_norm(x, lw.attn_norm, cfg.norm_eps, h, inv);
      linear(h, lw.wq, q);
      linear(h, lw.wk, k);
      linear(h, lw.wv, v);
      if (cfg.positional == PositionalScheme::Rotary) {
        apply_rotary(q, cfg, 1.0, t);
        apply_rotary(k, cfg, 1.0, t);
      }
      append_row(k_[li], k);
      append_row(v_[li], v);
      const Tensor& K = k_[li];
      const Tensor& V = v_[li];

      Tensor mix(1, d);
      for (std::size_t hd = 0; hd < H; ++hd) {
        const std::size_t off = hd * dh;
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= t; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q(0, off + c) * K(j, off + c);
          row[j] = s * scale;
          mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j <= t; ++j) row[j] /= sum;
        if (steering_) {
          for (const auto& [layer, head] : steering_->targets) {
            if (static_cast<std::size_t>(layer) == li && static_cast<std::size_t>(head) == hd) {
              steer_row_inplace(row, steering_->user_mask, steering_->alpha);
            }
          }
        }
        for (std::size_t c = 0; c < dh; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j <= t; ++j) acc += row[j] * V(j, off + c);
          mix(0, off + c) = acc;
        }
      }
      Tensor attn_out;
      linear(mix, lw.wo, attn_out);
      for (std::size_t i = 0; i < d; ++i) x.data[i] += attn_out.data[i];

      Tensor h2, up, down;
      rms_norm(x, lw.mlp_norm, cfg.norm_eps, h2, inv);
      linear(h2, lw.w_up, up);
      for (double& u : up.data) u = gelu(u);
      linear(up, lw.w_down, down);
      for (std::size_t i = 0; i < d; ++i) x.data[i] += down.data[i];
    }
    Tensor hf, logits;
    rms_norm(x, w_.final_norm, cfg.norm_eps, hf, inv);
    linear(hf, w_.unembed, logits);
    return logits;
  }

 private:
  const ModelWeights& w_;
  const SteeringSpec* steering_;
  std::vector<Tensor> k_, v_;
};

TokenId argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < logits.size(); ++v) {
    if (logits[v] > logits[best]) best = v;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

std::vector<TokenId> generate(const ModelWeights& weights,
                              std::span<const TokenId> prompt,
                              std::size_t max_new_tokens, TokenId eos,
                              const SteeringSpec* steering) {
  const auto limit = static_cast<std::size_t>(weights.config.max_seq_len);
  if (prompt.size() + max_new_tokens > limit) {
    fail(ErrorKind::SequenceTooLong,
         "prompt of " + std::to_string(prompt.size()) + " tokens plus " +
             std::to_string(max_new_tokens) +
             " new tokens exceeds max_seq_len " + std::to_string(limit));
  }
  if (prompt.empty()) fail(ErrorKind::InvalidArgument, "generation needs a prompt");
  std::vector<TokenId> out;
  if (max_new_tokens == 0) return out;
  detail::ForwardCache cache;
  detail::forward_cached(prompt, weights, cache, steering);
  TokenId next = argmax(cache.logits.row(prompt.size() - 1));
  Decoder decoder(weights, cache, steering);
  while (next != eos) {
    out.push_back(next);
    if (out.size() == max_new_tokens) break;
    const Tensor logits = decoder.step(next);
    next = argmax(logits.row(0));
  }
  return out;
}

}  // namespace ctxscope
