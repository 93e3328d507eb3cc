#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <set>

#include "wir/rng.hpp"

using wir::SeededRng;

TEST_CASE("same seed gives the same stream", "[rng]") {
  SeededRng a(7), b(7), c(8);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    any_diff |= x != c.next();
  }
  CHECK(any_diff);
}

TEST_CASE("forks are reproducible and distinct", "[rng]") {
  const SeededRng base(3);
  auto f1 = base.fork(1), f1b = base.fork(1), f2 = base.fork(2);
  for (int i = 0; i < 20; ++i) {
    const auto v = f1.next();
    CHECK(v == f1b.next());
    CHECK(v != f2.next());
  }
}

TEST_CASE("uniform and below stay in range", "[rng]") {
  SeededRng rng(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = rng.below(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal has unit moments", "[rng]") {
  SeededRng rng(5);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation", "[rng]") {
  SeededRng rng(9);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(w);
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

TEST_CASE("sample without replacement is sorted and distinct", "[rng]") {
  SeededRng rng(13);
  for (std::size_t n : {1u, 5u, 40u}) {
    for (std::size_t k = 0; k <= n; ++k) {
      const auto s = rng.sample_without_replacement(n, k);
      REQUIRE(s.size() == k);
      CHECK(std::is_sorted(s.begin(), s.end()));
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == k);
      for (auto i : s) CHECK(i < n);
    }
  }
}
