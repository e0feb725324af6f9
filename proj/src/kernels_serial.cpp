// Reference kernels: straightforward loops, no threading. The OpenMP
// versions in kernels_omp.cpp must match these bit for bit.

#include <algorithm>
#include <cmath>

#include "ctxscope/kernels.hpp"

namespace ctxscope::kernels::serial {

void linear(std::span<const double> x, std::span<const double> w,
            std::span<double> y, std::size_t rows, std::size_t in,
            std::size_t out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[o * in + i];
      y[r * out + o] = acc;
    }
  }
}

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::size_t rows, std::size_t in,
                     std::size_t out) {
  if (!dx.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dy[r * out + o];
        for (std::size_t i = 0; i < in; ++i) dx[r * in + i] += g * w[o * in + i];
      }
    }
  }
  if (!dw.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dy[r * out + o];
        for (std::size_t i = 0; i < in; ++i) dw[o * in + i] += g * x[r * in + i];
      }
    }
  }
}

void attention_probs(std::span<const double> q, std::span<const double> k,
                     std::span<double> probs, const AttentionShape& shape,
                     double scale) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  for (std::size_t h = 0; h < shape.n_heads; ++h) {
    const std::size_t off = h * shape.d_head;
    for (std::size_t i = 0; i < T; ++i) {
      double* row = probs.data() + (h * T + i) * T;
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < shape.d_head; ++d) {
          s += q[i * D + off + d] * k[j * D + off + d];
        }
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (std::size_t j = 0; j <= i; ++j) row[j] /= sum;
      for (std::size_t j = i + 1; j < T; ++j) row[j] = 0.0;
    }
  }
}

void attention_mix(std::span<const double> probs, std::span<const double> v,
                   std::span<double> out, const AttentionShape& shape) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  for (std::size_t h = 0; h < shape.n_heads; ++h) {
    const std::size_t off = h * shape.d_head;
    for (std::size_t i = 0; i < T; ++i) {
      const double* row = probs.data() + (h * T + i) * T;
      for (std::size_t d = 0; d < shape.d_head; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += row[j] * v[j * D + off + d];
        out[i * D + off + d] = acc;
      }
    }
  }
}

void attention_mix_backward(std::span<const double> probs,
                            std::span<const double> v,
                            std::span<const double> dout,
                            std::span<double> dprobs, std::span<double> dv,
                            const AttentionShape& shape) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  for (std::size_t h = 0; h < shape.n_heads; ++h) {
    const std::size_t off = h * shape.d_head;
    for (std::size_t i = 0; i < T; ++i) {
      double* drow = dprobs.data() + (h * T + i) * T;
      for (std::size_t j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < shape.d_head; ++d) {
          acc += dout[i * D + off + d] * v[j * D + off + d];
        }
        drow[j] = acc;
      }
      for (std::size_t j = i + 1; j < T; ++j) drow[j] = 0.0;
    }
    for (std::size_t j = 0; j < T; ++j) {
      for (std::size_t i = j; i < T; ++i) {
        const double p = probs[(h * T + i) * T + j];
        for (std::size_t d = 0; d < shape.d_head; ++d) {
          dv[j * D + off + d] += p * dout[i * D + off + d];
        }
      }
    }
  }
}

void attention_probs_backward(std::span<const double> probs,
                              std::span<double> dprobs,
                              std::span<const double> q,
                              std::span<const double> k, std::span<double> dq,
                              std::span<double> dk, const AttentionShape& shape,
                              double scale) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  for (std::size_t h = 0; h < shape.n_heads; ++h) {
    const std::size_t off = h * shape.d_head;
    for (std::size_t i = 0; i < T; ++i) {
      const double* prow = probs.data() + (h * T + i) * T;
      double* drow = dprobs.data() + (h * T + i) * T;
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) dot += prow[j] * drow[j];
      for (std::size_t j = 0; j <= i; ++j) {
        drow[j] = prow[j] * (drow[j] - dot) * scale;
      }
    }
    for (std::size_t i = 0; i < T; ++i) {
      const double* srow = dprobs.data() + (h * T + i) * T;
      for (std::size_t j = 0; j <= i; ++j) {
        for (std::size_t d = 0; d < shape.d_head; ++d) {
          dq[i * D + off + d] += srow[j] * k[j * D + off + d];
        }
      }
    }
    for (std::size_t j = 0; j < T; ++j) {
      for (std::size_t i = j; i < T; ++i) {
        const double s = dprobs[(h * T + i) * T + j];
        for (std::size_t d = 0; d < shape.d_head; ++d) {
          dk[j * D + off + d] += s * q[i * D + off + d];
        }
      }
    }
  }
}

}  // namespace ctxscope::kernels::serial
