// Copyright 2026 NASTAR Contributors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nastar/rng.hpp"
#include "support/stats.hpp"

using nastar::Rng;

TEST_CASE("same seed reproduces the same sequence") {
  Rng a(12345);
  Rng b(12345);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("different seeds diverge") {
  Rng a(1);
  Rng b(2);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) {
    if (a.next_u64() == b.next_u64()) ++equal;
  }
  CHECK(equal == 0);
}

TEST_CASE("uniform stays in [0,1) with the right moments") {
  Rng rng(7);
  const int n = 200000;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum_sq += u * u;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("uniform respects custom bounds and rejects empty ranges") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-4.0, 2.5);
    CHECK(u >= -4.0);
    CHECK(u < 2.5);
  }
  CHECK_THROWS_AS(rng.uniform(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rng.uniform(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("uniform_int covers its range uniformly") {
  Rng rng(99);
  const std::uint64_t n = 7;
  std::vector<std::size_t> counts(n, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = rng.uniform_int(n);
    REQUIRE(v < n);
    ++counts[v];
  }
  const std::vector<double> probs(n, 1.0 / static_cast<double>(n));
  CHECK(test_support::chi2_uniformity_pvalue(counts, probs) > 0.001);
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("normal has standard moments") {
  Rng rng(42);
  const int n = 200000;
  double sum = 0.0;
  double sum_sq = 0.0;
  double sum_cube = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
    sum_cube += z * z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(sum_cube / n) < 0.05);
}

TEST_CASE("fork yields decorrelated streams and leaves the parent intact") {
  Rng parent(2024);
  const std::uint64_t before = Rng(2024).next_u64();

  Rng child_a = parent.fork(1);
  Rng child_b = parent.fork(2);
  CHECK(parent.next_u64() == before);

  // Same stream id forks identically; distinct ids diverge.
  Rng child_a2 = Rng(2024).fork(1);
  CHECK(child_a.next_u64() == child_a2.next_u64());

  const int n = 20000;
  double sum_a = 0.0;
  double sum_b = 0.0;
  double sum_ab = 0.0;
  double sum_a2 = 0.0;
  double sum_b2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = child_a.uniform() - 0.5;
    const double b = child_b.uniform() - 0.5;
    sum_a += a;
    sum_b += b;
    sum_ab += a * b;
    sum_a2 += a * a;
    sum_b2 += b * b;
  }
  const double cov = sum_ab / n - (sum_a / n) * (sum_b / n);
  const double corr =
      cov / std::sqrt((sum_a2 / n - (sum_a / n) * (sum_a / n)) *
                      (sum_b2 / n - (sum_b / n) * (sum_b / n)));
  CHECK(std::abs(corr) < 0.03);
}

TEST_CASE("chi-squared helper matches the closed form for df=2") {
  // For df = 2 the survival function is exp(-x/2).
  CHECK(test_support::chi2_sf(2.0, 2.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(test_support::chi2_sf(5.0, 2.0) ==
        doctest::Approx(std::exp(-2.5)).epsilon(1e-10));
}
