#pragma once

// Dense kernels behind the transformer forward and backward passes.
//
// `kernels::` holds the OpenMP implementations used by the model;
// `kernels::serial::` holds plain-loop reference implementations with the same
// signatures. Both accumulate every output element in the same order, so the
// two agree bit for bit regardless of thread count.
//
// Layouts: activations are row-major [rows x dim]; weights are [out x in];
// attention probabilities are [n_heads][T][T] with zeros above the diagonal;
// head h owns columns [h*d_head, (h+1)*d_head) of q, k, v and out.

#include <cstddef>
#include <span>

namespace ctxscope::kernels {

struct AttentionShape {
  std::size_t seq_len;
  std::size_t n_heads;
  std::size_t d_head;
  std::size_t d_model() const { return n_heads * d_head; }
};

// y = x W^T
void linear(std::span<const double> x, std::span<const double> w,
            std::span<double> y, std::size_t rows, std::size_t in,
            std::size_t out);

// dx += dy W ; dw += dy^T x. Either output may be empty to skip it.
void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::size_t rows, std::size_t in,
                     std::size_t out);

// probs[h][q][k] = softmax_k<=q(scale * q_h . k_h)
void attention_probs(std::span<const double> q, std::span<const double> k,
                     std::span<double> probs, const AttentionShape& shape,
                     double scale);

// out[q, h] = sum_k probs[h][q][k] v[k, h]
void attention_mix(std::span<const double> probs, std::span<const double> v,
                   std::span<double> out, const AttentionShape& shape);

// dprobs = dout . v (overwritten, causal part only); dv += probs^T dout
void attention_mix_backward(std::span<const double> probs,
                            std::span<const double> v,
                            std::span<const double> dout,
                            std::span<double> dprobs, std::span<double> dv,
                            const AttentionShape& shape);

// Softmax backward followed by the score backward. `dprobs` is overwritten
// with the score gradient; dq and dk are accumulated.
void attention_probs_backward(std::span<const double> probs,
                              std::span<double> dprobs,
                              std::span<const double> q,
                              std::span<const double> k, std::span<double> dq,
                              std::span<double> dk, const AttentionShape& shape,
                              double scale);

// Number of threads the OpenMP kernels would use (1 without OpenMP).
int max_threads();

namespace serial {

void linear(std::span<const double> x, std::span<const double> w,
            std::span<double> y, std::size_t rows, std::size_t in,
            std::size_t out);

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::size_t rows, std::size_t in,
                     std::size_t out);

void attention_probs(std::span<const double> q, std::span<const double> k,
                     std::span<double> probs, const AttentionShape& shape,
                     double scale);

void attention_mix(std::span<const double> probs, std::span<const double> v,
                   std::span<double> out, const AttentionShape& shape);

void attention_mix_backward(std::span<const double> probs,
                            std::span<const double> v,
                            std::span<const double> dout,
                            std::span<double> dprobs, std::span<double> dv,
                            const AttentionShape& shape);

void attention_probs_backward(std::span<const double> probs,
                              std::span<double> dprobs,
                              std::span<const double> q,
                              std::span<const double> k, std::span<double> dq,
                              std::span<double> dk, const AttentionShape& shape,
                              double scale);

}  // namespace serial
}  // namespace ctxscope::kernels
