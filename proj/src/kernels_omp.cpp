#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ctxscope/kernels.hpp"

namespace ctxscope::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void linear(std::span<const double> x, std::span<const double> w,
            std::span<double> y, std::size_t rows, std::size_t in,
            std::size_t out) {
  const double* xp = x.data();
  const double* wp = w.data();
  double* yp = y.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      const double* xr = xp + r * in;
      const double* wo = wp + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      yp[r * out + o] = acc;
    }
  }
}

void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::size_t rows, std::size_t in,
                     std::size_t out) {
  const double* xp = x.data();
  const double* wp = w.data();
  const double* dyp = dy.data();
  if (!dx.empty()) {
    double* dxp = dx.data();
    // Each thread owns whole rows of dx.
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
      double* dxr = dxp + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyp[r * out + o];
        const double* wo = wp + o * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
      }
    }
  }
  if (!dw.empty()) {
    double* dwp = dw.data();
    // Each thread owns whole rows of dw; rows of x are visited in order.
#pragma omp parallel for schedule(static)
    for (std::size_t o = 0; o < out; ++o) {
      double* dwo = dwp + o * in;
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = dyp[r * out + o];
        const double* xr = xp + r * in;
        for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
      }
    }
  }
}

void attention_probs(std::span<const double> q, std::span<const double> k,
                     std::span<double> probs, const AttentionShape& shape,
                     double scale) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  const std::size_t H = shape.n_heads;
  const std::size_t dh = shape.d_head;
#pragma omp parallel for collapse(2) schedule(dynamic, 16)
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t off = h * dh;
      const double* qi = q.data() + i * D + off;
      double* row = probs.data() + (h * T + i) * T;
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= i; ++j) {
        const double* kj = k.data() + j * D + off;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      for (std::size_t j = 0; j <= i; ++j) row[j] /= sum;
      std::fill(row + i + 1, row + T, 0.0);
    }
  }
}

void attention_mix(std::span<const double> probs, std::span<const double> v,
                   std::span<double> out, const AttentionShape& shape) {
  const std::size_t T = shape.seq_len;
  const std::size_t D = shape.d_model();
  const std::size_t H = shape.n_heads;
  const std::size_t dh = shape.d_head;
#pragma omp parallel for collapse(2) schedule(dynamic, 16)
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t off = h * dh;
      const double* row = probs.data() + (h * T + i) * T;
      double* oi = out.data() + i * D + off;
      for (std::size_t d = 0; d < dh; ++d) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= i; ++j) acc += row[j] * v[j * D + off + d];
        oi[d] = acc;
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
  const std::size_t H = shape.n_heads;
  const std::size_t dh = shape.d_head;
#pragma omp parallel
  {
#pragma omp for collapse(2) schedule(dynamic, 16)
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const std::size_t off = h * dh;
        const double* gi = dout.data() + i * D + off;
        double* drow = dprobs.data() + (h * T + i) * T;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* vj = v.data() + j * D + off;
          double acc = 0.0;
          for (std::size_t d = 0; d < dh; ++d) acc += gi[d] * vj[d];
          drow[j] = acc;
        }
        std::fill(drow + i + 1, drow + T, 0.0);
      }
    }
#pragma omp for collapse(2) schedule(dynamic, 16)
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t j = 0; j < T; ++j) {
        const std::size_t off = h * dh;
        double* dvj = dv.data() + j * D + off;
        for (std::size_t i = j; i < T; ++i) {
          const double p = probs[(h * T + i) * T + j];
          const double* gi = dout.data() + i * D + off;
          for (std::size_t d = 0; d < dh; ++d) dvj[d] += p * gi[d];
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
  const std::size_t H = shape.n_heads;
  const std::size_t dh = shape.d_head;
#pragma omp parallel
  {
#pragma omp for collapse(2) schedule(dynamic, 16)
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const double* prow = probs.data() + (h * T + i) * T;
        double* drow = dprobs.data() + (h * T + i) * T;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += prow[j] * drow[j];
        for (std::size_t j = 0; j <= i; ++j) {
          drow[j] = prow[j] * (drow[j] - dot) * scale;
        }
      }
    }
#pragma omp for collapse(2) schedule(dynamic, 16)
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        const std::size_t off = h * dh;
        const double* srow = dprobs.data() + (h * T + i) * T;
        double* dqi = dq.data() + i * D + off;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = k.data() + j * D + off;
          for (std::size_t d = 0; d < dh; ++d) dqi[d] += srow[j] * kj[d];
        }
      }
    }
#pragma omp for collapse(2) schedule(dynamic, 16)
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t j = 0; j < T; ++j) {
        const std::size_t off = h * dh;
        double* dkj = dk.data() + j * D + off;
        for (std::size_t i = j; i < T; ++i) {
          const double s = dprobs[(h * T + i) * T + j];
          const double* qi = q.data() + i * D + off;
          for (std::size_t d = 0; d < dh; ++d) dkj[d] += s * qi[d];
        }
      }
    }
  }
}

}  // namespace ctxscope::kernels
