#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fetalseg/rng.hpp"

using fseg::RandomStream;

TEST_SUITE("rng") {
  TEST_CASE("same key gives the same sequence") {
    RandomStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("different seeds and tags give different sequences") {
    RandomStream a(1), b(2);
    CHECK(a.next_u64() != b.next_u64());
    const RandomStream root(9);
    CHECK(root.derive(0).key() != root.derive(1).key());
    CHECK(root.derive("a").key() != root.derive("b").key());
    CHECK(root.derive({1, 2}).key() != root.derive({2, 1}).key());
  }

  TEST_CASE("derive does not advance the parent and ignores its position") {
    RandomStream root(5);
    const auto before = root.derive(3).key();
    RandomStream copy = root;
    const auto first = copy.next_u64();
    (void)root.derive(7);
    CHECK(root.next_u64() == first);
    CHECK(root.derive(3).key() == before);
  }

  TEST_CASE("derive with a tag list equals chained derives") {
    const RandomStream root(11);
    CHECK(root.derive({4, 8}).key() == root.derive(4).derive(8).key());
  }

  TEST_CASE("uniform values stay in range with the expected mean") {
    RandomStream r(3);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
    for (int i = 0; i < 1000; ++i) {
      const double v = r.uniform(-3.0, 2.0);
      REQUIRE(v >= -3.0);
      REQUIRE(v < 2.0);
    }
  }

  TEST_CASE("below covers the whole range") {
    RandomStream r(4);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      const auto v = r.below(7);
      REQUIRE(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
  }

  TEST_CASE("bernoulli and normal statistics") {
    RandomStream r(8);
    const int n = 40000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += r.bernoulli(0.3);
    CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.03));
    CHECK_FALSE(r.bernoulli(0.0));
    CHECK(r.bernoulli(1.0));

    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal(2.0, 3.0);
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 2.0) < 0.06);
    CHECK(std::sqrt(var) == doctest::Approx(3.0).epsilon(0.02));
  }
}
