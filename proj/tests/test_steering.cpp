#include <doctest.h>

#include <cmath>
#include <random>

#include "ctxscope/error.hpp"
#include "ctxscope/steering.hpp"
#include "support/random.hpp"

using namespace ctxscope;

namespace {

double masked_sum(const std::vector<double>& row, const std::vector<bool>& mask, bool value) {
  double s = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (mask[i] == value) s += row[i];
  }
  return s;
}

}  // namespace

TEST_CASE("steer_row hand case") {
  const auto out = steer_row(std::vector<double>{0.5, 0.5}, {true, false}, 0.5);
  CHECK(out[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("steer_row edge cases") {
  const std::vector<double> row{0.2, 0.3, 0.5};
  CHECK(steer_row(row, {true, false, true}, 1.0) == row);
  const auto all_user = steer_row(row, {true, true, true}, 0.1);
  for (std::size_t i = 0; i < row.size(); ++i) CHECK(all_user[i] == doctest::Approx(row[i]));
  // no user mass: every entry scales by alpha / (alpha * 1)
  const auto no_user = steer_row(row, {false, false, false}, 0.3);
  for (std::size_t i = 0; i < row.size(); ++i) CHECK(no_user[i] == doctest::Approx(row[i]));
  CHECK_THROWS_AS(steer_row(std::vector<double>{0.0, 0.0}, {true, false}, 0.5), Error);
  CHECK_THROWS_AS(steer_row(row, {true, false}, 0.5), Error);
  CHECK_THROWS_AS(steer_row(row, {true, false, true}, 0.0), Error);
  CHECK_THROWS_AS(steer_row(row, {true, false, true}, 1.5), Error);
}

TEST_CASE("steer_row properties on random rows") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  std::uniform_real_distribution<double> alpha_dist(0.01, 0.99);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = len(rng);
    const auto row = testutil::random_stochastic_row(rng, n);
    const auto mask = testutil::random_mask(rng, n);
    const double a = alpha_dist(rng);
    const auto out = steer_row(row, mask, a);
    double total = 0.0;
    for (double v : out) total += v;
    CHECK(std::abs(total - 1.0) < 1e-9);
    const double before = masked_sum(row, mask, true);
    if (before > 0.0 && before < 1.0) CHECK(masked_sum(out, mask, true) > before);
    const auto twice = steer_row(out, mask, a);
    const auto squared = steer_row(row, mask, a * a);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(twice[i] - squared[i]) < 1e-9);
    // order within each class is kept
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (mask[i] == mask[j] && row[i] < row[j]) CHECK(out[i] <= out[j]);
      }
    }
  }
}

TEST_CASE("in-place steering treats positions past the mask as non-user") {
  std::vector<double> row{0.25, 0.25, 0.25, 0.25};
  steer_row_inplace(row, {true, true}, 0.5);
  const auto want = steer_row(std::vector<double>{0.25, 0.25, 0.25, 0.25},
                              {true, true, false, false}, 0.5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(row[i] == want[i]);
}

TEST_CASE("select_heads hand cases") {
  AttentionRecord rec(1, 2, 2);
  // query row 1: head 0 puts 0.3 on the user key, head 1 puts 0.7
  rec.at(0, 0, 1, 0) = 0.7;
  rec.at(0, 0, 1, 1) = 0.3;
  rec.at(0, 1, 1, 0) = 0.3;
  rec.at(0, 1, 1, 1) = 0.7;
  CHECK(select_heads(rec, {false, true}).heads == std::vector<int>{1});
  rec.at(0, 1, 1, 0) = 0.5;
  rec.at(0, 1, 1, 1) = 0.5;
  rec.at(0, 0, 1, 0) = 0.5;
  rec.at(0, 0, 1, 1) = 0.5;
  CHECK(select_heads(rec, {false, true}).heads == std::vector<int>{0});
  CHECK_THROWS_AS(select_heads(rec, {false, false}), Error);

  AttentionRecord single(3, 1, 4);
  std::mt19937_64 rng(2);
  single = testutil::random_record(rng, 3, 1, 4);
  CHECK(select_heads(single, {true, false, true, false}).heads == std::vector<int>{0, 0, 0});
}

TEST_CASE("select_heads equals a brute-force double loop") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t T = 3 + rep % 9;
    const auto rec = testutil::random_record(rng, 3, 4, T);
    auto mask = testutil::random_mask(rng, T);
    mask[0] = true;
    std::uniform_int_distribution<std::size_t> qd(0, T - 1);
    const std::size_t q = qd(rng);
    const HeadSelection got = select_heads(rec, mask, q);
    CHECK(got.probe_position == q);
    for (int l = 0; l < 3; ++l) {
      int best = 0;
      double best_mass = -1.0;
      for (int h = 0; h < 4; ++h) {
        double m = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
          if (mask[k]) m += rec.at(l, h, q, k);
        }
        if (m > best_mass) {
          best_mass = m;
          best = h;
        }
      }
      CHECK(got.heads[static_cast<std::size_t>(l)] == best);
    }
  }
}

TEST_CASE("head selection JSON round trip") {
  HeadSelection s;
  s.heads = {2, 0, 3};
  s.probe_id = "nih-200-0.5";
  s.probe_position = 17;
  const HeadSelection back = HeadSelection::from_json(s.to_json());
  CHECK(back.heads == s.heads);
  CHECK(back.probe_id == s.probe_id);
  CHECK(back.probe_position == s.probe_position);
}

TEST_CASE("steering_for targets one head per layer") {
  HeadSelection s;
  s.heads = {1, 3};
  const SteeringSpec spec = steering_for(s, 0.3, {true, false});
  CHECK(spec.alpha == 0.3);
  CHECK(spec.targets == std::vector<std::pair<int, int>>{{0, 1}, {1, 3}});
  CHECK(default_alphas() == std::vector<double>{0.01, 0.1, 0.3, 0.5, 0.7, 0.9});
}
