#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "seat/prng.hpp"

using namespace seat;

TEST_CASE("fnv1a64 matches the reference constants") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  // reference value for "a" from the FNV-1a 64 specification
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("equal stream identifiers replay the same sequence") {
  Prng a(42, "stream", 7);
  Prng b(42, "stream", 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("seed, label and index all separate streams") {
  Prng base(1, "x", 0);
  Prng seed2(2, "x", 0);
  Prng label2(1, "y", 0);
  Prng idx2(1, "x", 1);
  std::uint64_t v = base.next_u64();
  CHECK(v != seed2.next_u64());
  CHECK(v != label2.next_u64());
  CHECK(v != idx2.next_u64());
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Prng rng(3, "uniform");
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("below covers [0,n) without obvious bias") {
  Prng rng(4, "below");
  const std::uint64_t n = 7;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(n)];
  for (std::uint64_t k = 0; k < n; ++k) {
    CHECK(counts[k] > 9000);
    CHECK(counts[k] < 11000);
  }
  CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("normal has roughly standard moments") {
  Prng rng(5, "normal");
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.03);
}

TEST_CASE("shuffle permutes without losing elements") {
  Prng rng(6, "shuffle");
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto orig = v;
  rng.shuffle(v);
  CHECK(v != orig);  // 50! makes a fixed-point astronomically unlikely
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}

TEST_CASE("sample_without_replacement yields k distinct in-range indices") {
  Prng rng(7, "sample");
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(20);
    std::size_t k = rng.below(n + 1);
    auto s = rng.sample_without_replacement(n, k);
    CHECK(s.size() == k);
    std::set<std::size_t> uniq(s.begin(), s.end());
    CHECK(uniq.size() == k);
    for (auto idx : s) CHECK(idx < n);
  }
  CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), std::invalid_argument);
}
