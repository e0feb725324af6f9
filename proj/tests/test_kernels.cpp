#include <doctest.h>

#include <array>
#include <random>
#include <vector>

#include "ctxscope/kernels.hpp"

using namespace ctxscope;

namespace {

std::vector<double> randv(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("parallel linear kernels match the serial reference bitwise") {
  std::mt19937_64 rng(7);
  using Dims = std::array<std::size_t, 3>;
  for (const Dims& dims : {Dims{1, 1, 1}, Dims{5, 7, 3}, Dims{37, 64, 256}}) {
    const auto [rows, in, out] = dims;
    const auto x = randv(rng, rows * in);
    const auto w = randv(rng, out * in);
    const auto dy = randv(rng, rows * out);
    std::vector<double> y1(rows * out), y2(rows * out);
    kernels::linear(x, w, y1, rows, in, out);
    kernels::serial::linear(x, w, y2, rows, in, out);
    CHECK(y1 == y2);
    std::vector<double> dx1(rows * in, 0.5), dx2(rows * in, 0.5);
    std::vector<double> dw1(out * in, 0.25), dw2(out * in, 0.25);
    kernels::linear_backward(x, w, dy, dx1, dw1, rows, in, out);
    kernels::serial::linear_backward(x, w, dy, dx2, dw2, rows, in, out);
    CHECK(dx1 == dx2);
    CHECK(dw1 == dw2);
  }
}

TEST_CASE("parallel attention kernels match the serial reference bitwise") {
  std::mt19937_64 rng(11);
  using Dims = std::array<std::size_t, 3>;
  for (const Dims& dims : {Dims{1, 1, 2}, Dims{9, 2, 4}, Dims{70, 4, 16}}) {
    const auto [T, H, dh] = dims;
    const kernels::AttentionShape shape{T, H, dh};
    const std::size_t D = shape.d_model();
    const auto q = randv(rng, T * D), k = randv(rng, T * D), v = randv(rng, T * D);
    const auto dout = randv(rng, T * D);
    const double scale = 0.3;
    std::vector<double> p1(H * T * T, -1.0), p2(H * T * T, -2.0);
    kernels::attention_probs(q, k, p1, shape, scale);
    kernels::serial::attention_probs(q, k, p2, shape, scale);
    CHECK(p1 == p2);

    std::vector<double> o1(T * D), o2(T * D);
    kernels::attention_mix(p1, v, o1, shape);
    kernels::serial::attention_mix(p2, v, o2, shape);
    CHECK(o1 == o2);

    std::vector<double> dp1(H * T * T), dp2(H * T * T), dv1(T * D), dv2(T * D);
    kernels::attention_mix_backward(p1, v, dout, dp1, dv1, shape);
    kernels::serial::attention_mix_backward(p2, v, dout, dp2, dv2, shape);
    CHECK(dp1 == dp2);
    CHECK(dv1 == dv2);

    std::vector<double> dq1(T * D), dq2(T * D), dk1(T * D), dk2(T * D);
    kernels::attention_probs_backward(p1, dp1, q, k, dq1, dk1, shape, scale);
    kernels::serial::attention_probs_backward(p2, dp2, q, k, dq2, dk2, shape, scale);
    CHECK(dq1 == dq2);
    CHECK(dk1 == dk2);
  }
}

TEST_CASE("attention probabilities are causal and row-stochastic") {
  std::mt19937_64 rng(3);
  const kernels::AttentionShape shape{12, 3, 4};
  const std::size_t D = shape.d_model();
  const auto q = randv(rng, 12 * D), k = randv(rng, 12 * D);
  std::vector<double> p(3 * 12 * 12);
  kernels::attention_probs(q, k, p, shape, 1.0);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t i = 0; i < 12; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 12; ++j) {
        const double a = p[(h * 12 + i) * 12 + j];
        if (j > i) {
          CHECK(a == 0.0);
        } else {
          CHECK(a > 0.0);
        }
        s += a;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}
