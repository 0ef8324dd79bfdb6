#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <vector>

#include "tactnet/rng.hpp"
#include "tactnet/tensor.hpp"

using tactnet::Index;
using tactnet::Rng;
using tactnet::Tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.size() == 24);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.dim(2) == 4);
  CHECK(Tensor<float>::count(t.shape()) == t.size());
  for (Index i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);

  CHECK(Tensor<float>().empty());
  CHECK_THROWS_AS(Tensor<float>({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({-1}), std::invalid_argument);
}

TEST_CASE("tensor indexing is row-major, last index fastest") {
  Tensor<float> t({2, 3, 4});
  float next = 0.0f;
  for (Index a = 0; a < 2; ++a)
    for (Index b = 0; b < 3; ++b)
      for (Index c = 0; c < 4; ++c) t(a, b, c) = next++;
  // walking the flat buffer must reproduce the fill order exactly
  for (Index i = 0; i < t.size(); ++i) CHECK(t[i] == static_cast<float>(i));
  CHECK(t(1, 2, 3) == 23.0f);
  CHECK(t(1, 0, 0) == 12.0f);

  Tensor<float> q({2, 2, 2, 2});
  q(1, 0, 1, 1) = 7.0f;
  CHECK(q[8 + 0 + 2 + 1] == 7.0f);
}

TEST_CASE("tensor construction helpers") {
  Tensor<double> c = Tensor<double>::constant({3, 2}, 0.5);
  for (Index i = 0; i < c.size(); ++i) CHECK(c[i] == 0.5);

  Tensor<float> f = Tensor<float>::from({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(f(1, 0) == 3.0f);
  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1.0f}), std::invalid_argument);
}

TEST_CASE("tensor views share storage") {
  Tensor<float> t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto m = t.matrix(2, 3);
  CHECK(m(0, 2) == 3.0f);
  m(1, 1) = 50.0f;
  CHECK(t(1, 1) == 50.0f);

  t.array() += 1.0f;
  CHECK(t(0, 0) == 2.0f);

  CHECK_THROWS_AS(t.matrix(4, 2), std::invalid_argument);
}

TEST_CASE("tensor reshape and cast") {
  Tensor<float> t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  t.reshape({3, 2});
  CHECK(t(2, 1) == 6.0f);
  CHECK_THROWS_AS(t.reshape({4, 2}), std::invalid_argument);

  Tensor<float> r = t.reshaped({6});
  CHECK(r.rank() == 1);
  CHECK(t.rank() == 2);  // original untouched

  Tensor<double> d = t.cast<double>();
  CHECK(d(2, 1) == 6.0);
  CHECK(d.shape() == t.shape());
}

TEST_CASE("tensor finiteness check") {
  Tensor<float> t({2, 2});
  CHECK(t.all_finite());
  t[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t[3] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("shape_string formats extents") {
  CHECK(tactnet::shape_string({2, 3, 4}) == "[2x3x4]");
  CHECK(tactnet::shape_string({}) == "[]");
}

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 256; ++i) {
    const auto va = a.raw();
    all_equal = all_equal && (va == b.raw());
    any_diff = any_diff || (va != c.raw());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng uniform stays in [0,1) and fills the range") {
  Rng rng(1);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);

  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
}

TEST_CASE("rng uniform_int covers inclusive bounds uniformly enough") {
  Rng rng(7);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const auto v = rng.uniform_int(2, 6);
    REQUIRE(v >= 2);
    REQUIRE(v <= 6);
    counts[static_cast<std::size_t>(v - 2)]++;
  }
  for (int n : counts) CHECK(n > 800);  // expectation 1000 each
}

TEST_CASE("rng normal has the requested moments") {
  Rng rng(11);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);

  Rng rng2(11);
  double shifted = 0.0;
  for (int i = 0; i < n; ++i) shifted += rng2.normal(5.0, 0.1);
  CHECK(std::abs(shifted / n - 5.0) < 0.01);
}

TEST_CASE("rng shuffle permutes deterministically") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;

  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);                       // same seed, same order
  CHECK(std::is_sorted(v.begin(), v.end()) == false);

  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);  // a permutation

  std::vector<int> u(50);
  std::iota(u.begin(), u.end(), 0);
  Rng c(4);
  c.shuffle(u);
  CHECK(u != v);  // different seed, different order
}

TEST_CASE("rng mix derives uncorrelated sub-streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 16; ++seed)
    for (std::uint64_t tag = 0; tag < 16; ++tag) seen.insert(Rng::mix(seed, tag));
  CHECK(seen.size() == 256);  // no collisions across nearby seeds/tags
  CHECK(Rng::mix(1, 2) == Rng::mix(1, 2));
}
