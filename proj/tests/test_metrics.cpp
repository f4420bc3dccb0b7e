#include <doctest.h>

#include <cmath>

#include "tarnet/errors.hpp"
#include "tarnet/metrics.hpp"
#include "tarnet/rng.hpp"

using namespace tarnet;

namespace {

/// Exact AR p-value by enumerating all 2^n swap patterns.
double exhaustive_ar_p(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double sa = 0.0, sb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double observed = std::abs(sa - sb) / static_cast<double>(n);
  int64_t hits = 0;
  const uint64_t total = uint64_t{1} << n;
  for (uint64_t mask = 0; mask < total; ++mask) {
    double pa = 0.0, pb = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        pa += b[i];
        pb += a[i];
      } else {
        pa += a[i];
        pb += b[i];
      }
    }
    if (std::abs(pa - pb) / static_cast<double>(n) >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("metrics: topk on hand-built score vectors") {
  // Exactly 3 of 4 utterances carry the label inside the top-2.
  std::vector<std::vector<double>> scores = {
      {0.9, 0.5, 0.1},   // label 0: rank 0
      {0.4, 0.6, 0.2},   // label 0: rank 1
      {0.5, 0.1, 0.45},  // label 2: rank 1
      {0.8, 0.15, 0.1},  // label 2: rank 2 -> outside top-2
  };
  std::vector<int> labels = {0, 0, 2, 2};
  CHECK(topk_accuracy(scores, labels, 2) == doctest::Approx(0.75));
  CHECK(topk_accuracy(scores, labels, 1) == doctest::Approx(0.25));

  // k beyond the class count clamps: always 1.0.
  CHECK(topk_accuracy(scores, labels, 5) == doctest::Approx(1.0));

  // Perfect argmax predictions.
  std::vector<std::vector<double>> perfect = {{1.0, 0.0}, {0.0, 1.0}};
  std::vector<int> plabels = {0, 1};
  CHECK(topk_accuracy(perfect, plabels, 1) == doctest::Approx(1.0));
  CHECK(topk_accuracy(perfect, plabels, 5) == doctest::Approx(1.0));
}

TEST_CASE("metrics: topk tie-breaking prefers the lower class index") {
  std::vector<std::vector<double>> scores = {{0.5, 0.5, 0.1}};
  CHECK(topk_accuracy(scores, {0}, 1) == doctest::Approx(1.0));
  CHECK(topk_accuracy(scores, {1}, 1) == doctest::Approx(0.0));
  CHECK(topk_accuracy(scores, {1}, 2) == doctest::Approx(1.0));
}

TEST_CASE("metrics: topk is monotone in k") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const int classes = 3 + static_cast<int>(rng.uniform_int(8));
    std::vector<std::vector<double>> scores(25);
    std::vector<int> labels(25);
    for (auto& s : scores) {
      s.resize(static_cast<size_t>(classes));
      for (auto& v : s) v = rng.uniform(-1.0, 1.0);
    }
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(classes));
    double prev = 0.0;
    for (int k = 1; k <= classes + 2; ++k) {
      const double acc = topk_accuracy(scores, labels, k);
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(prev == doctest::Approx(1.0));
  }
}

TEST_CASE("metrics: weighted PRF hand example") {
  const Prf prf = weighted_prf({0, 0, 1, 1}, {0, 1, 1, 1});
  CHECK(prf.precision == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(prf.recall == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
  CHECK(prf.f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-12));

  const Prf perfect = weighted_prf({2, 0, 1}, {2, 0, 1});
  CHECK(perfect.precision == doctest::Approx(1.0));
  CHECK(perfect.recall == doctest::Approx(1.0));
  CHECK(perfect.f1 == doctest::Approx(1.0));
}

TEST_CASE("metrics: weighted recall equals micro accuracy") {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(40));
    const int classes = 2 + static_cast<int>(rng.uniform_int(6));
    std::vector<int> truth(static_cast<size_t>(n)), pred(static_cast<size_t>(n));
    for (auto& v : truth) v = static_cast<int>(rng.uniform_int(classes));
    for (auto& v : pred) v = static_cast<int>(rng.uniform_int(classes));
    int hits = 0;
    for (int i = 0; i < n; ++i)
      if (truth[static_cast<size_t>(i)] == pred[static_cast<size_t>(i)]) ++hits;
    const double accuracy = static_cast<double>(hits) / n;
    CHECK(weighted_prf(truth, pred).recall == doctest::Approx(accuracy).epsilon(1e-12));
  }
}

TEST_CASE("metrics: weighted_prf validates input") {
  CHECK_THROWS_AS(weighted_prf({}, {}), UsageError);
  CHECK_THROWS_AS(weighted_prf({0, 1}, {0}), UsageError);
}

TEST_CASE("metrics: ar test identical inputs give p = 1") {
  std::vector<double> a = {1, 0, 1, 1, 0, 1};
  const ArResult r = approx_randomization(a, a, 500, 42);
  CHECK(r.observed == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("metrics: ar test is deterministic under a fixed seed") {
  std::vector<double> a = {1, 1, 0, 1, 0, 1, 1, 0};
  std::vector<double> b = {0, 1, 0, 0, 1, 1, 0, 0};
  const ArResult r1 = approx_randomization(a, b, 2000, 7);
  const ArResult r2 = approx_randomization(a, b, 2000, 7);
  CHECK(r1.p_value == r2.p_value);
  const ArResult r3 = approx_randomization(a, b, 2000, 8);
  CHECK(r1.p_value != r3.p_value);  // different stream, different estimate
}

TEST_CASE("metrics: ar test stays within (0, 1]") {
  Rng rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(20));
    std::vector<double> a(static_cast<size_t>(n)), b(static_cast<size_t>(n));
    for (auto& v : a) v = static_cast<double>(rng.uniform_int(2));
    for (auto& v : b) v = static_cast<double>(rng.uniform_int(2));
    const ArResult r = approx_randomization(a, b, 200, 1000 + trial);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
  }
}

TEST_CASE("metrics: ar test tracks the exhaustive enumeration on small n") {
  Rng rng(74);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(8));  // n <= 12
    std::vector<double> a(static_cast<size_t>(n)), b(static_cast<size_t>(n));
    for (auto& v : a) v = static_cast<double>(rng.uniform_int(2));
    for (auto& v : b) v = static_cast<double>(rng.uniform_int(2));
    const double exact = exhaustive_ar_p(a, b);
    const ArResult r = approx_randomization(a, b, 10000, 500 + trial);
    CAPTURE(trial);
    CHECK(std::abs(r.p_value - exact) <= 0.02);
  }
}

TEST_CASE("metrics: ar test rejects mismatched inputs") {
  CHECK_THROWS_AS(approx_randomization({1.0}, {1.0, 0.0}, 10, 0), UsageError);
  CHECK_THROWS_AS(approx_randomization({}, {}, 10, 0), UsageError);
}
