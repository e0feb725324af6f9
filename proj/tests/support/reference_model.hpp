#pragma once

// Straightforward reimplementation of the decoder used as a test oracle.
// Shares no code with the library forward pass beyond the weight structs.

#include <cmath>
#include <complex>
#include <vector>

#include "ctxscope/model.hpp"

namespace ref {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) {
  return Mat(r, std::vector<double>(c, 0.0));
}

inline Mat matmul_t(const Mat& x, const ctxscope::Tensor& w) {
  Mat y = zeros(x.size(), w.rows);
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t o = 0; o < w.rows; ++o)
      for (std::size_t i = 0; i < w.cols; ++i) y[r][o] += x[r][i] * w(o, i);
  return y;
}

inline Mat rmsnorm(const Mat& x, const ctxscope::Tensor& g, double eps) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    double ms = 0.0;
    for (double v : x[r]) ms += v * v / static_cast<double>(x[r].size());
    const double denom = std::sqrt(ms + eps);
    for (std::size_t i = 0; i < x[r].size(); ++i) y[r][i] = g.data[i] * x[r][i] / denom;
  }
  return y;
}

inline void rotate(Mat& x, int n_heads, int d_head, double base) {
  for (std::size_t t = 0; t < x.size(); ++t)
    for (int h = 0; h < n_heads; ++h)
      for (int p = 0; p < d_head / 2; ++p) {
        const double angle = static_cast<double>(t) / std::pow(base, 2.0 * p / d_head);
        const std::size_t i = static_cast<std::size_t>(h * d_head + 2 * p);
        std::complex<double> z(x[t][i], x[t][i + 1]);
        z *= std::polar(1.0, angle);
        x[t][i] = z.real();
        x[t][i + 1] = z.imag();
      }
}

struct Output {
  Mat logits;
  // [layer][head][q][k]
  std::vector<std::vector<Mat>> attention;
};

inline Output forward(const std::vector<ctxscope::TokenId>& tokens,
                      const ctxscope::ModelWeights& w) {
  const auto& cfg = w.config;
  const std::size_t T = tokens.size();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const int H = cfg.n_heads;
  const int dh = cfg.d_model / cfg.n_heads;
  Output out;
  Mat x = zeros(T, d);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < d; ++i) {
      x[t][i] = w.tok_embed(static_cast<std::size_t>(tokens[t]), i);
      if (cfg.positional == ctxscope::PositionalScheme::Learned) x[t][i] += w.pos_embed(t, i);
    }
  for (const auto& L : w.layers) {
    Mat h = rmsnorm(x, L.attn_norm, cfg.norm_eps);
    Mat q = matmul_t(h, L.wq), k = matmul_t(h, L.wk), v = matmul_t(h, L.wv);
    if (cfg.positional == ctxscope::PositionalScheme::Rotary) {
      rotate(q, H, dh, cfg.rope_base);
      rotate(k, H, dh, cfg.rope_base);
    }
    Mat mix = zeros(T, d);
    std::vector<Mat> heads;
    for (int hh = 0; hh < H; ++hh) {
      Mat A = zeros(T, T);
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> s(i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (int e = 0; e < dh; ++e) dot += q[i][hh * dh + e] * k[j][hh * dh + e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
        }
        double mx = s[0];
        for (double z : s) mx = std::max(mx, z);
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) sum += std::exp(s[j] - mx);
        for (std::size_t j = 0; j <= i; ++j) A[i][j] = std::exp(s[j] - mx) / sum;
        for (std::size_t j = 0; j <= i; ++j)
          for (int e = 0; e < dh; ++e) mix[i][hh * dh + e] += A[i][j] * v[j][hh * dh + e];
      }
      heads.push_back(A);
    }
    out.attention.push_back(heads);
    Mat o = matmul_t(mix, L.wo);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < d; ++i) x[t][i] += o[t][i];
    Mat h2 = rmsnorm(x, L.mlp_norm, cfg.norm_eps);
    Mat u = matmul_t(h2, L.w_up);
    for (auto& row : u)
      for (double& z : row)
        z = 0.5 * z * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (z + 0.044715 * z * z * z)));
    Mat dn = matmul_t(u, L.w_down);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < d; ++i) x[t][i] += dn[t][i];
  }
  out.logits = matmul_t(rmsnorm(x, w.final_norm, cfg.norm_eps), w.unembed);
  return out;
}

}  // namespace ref
