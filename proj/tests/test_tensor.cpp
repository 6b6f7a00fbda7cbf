#include <catch2/catch_amalgamated.hpp>

#include "artic/core/random.hpp"
#include "artic/core/tensor.hpp"

using artic::Rng;
using artic::Tensor;

TEST_CASE("tensor shape and indexing") {
  Tensor t({2, 3, 4});
  REQUIRE(t.numel() == 24);
  REQUIRE(t.ndim() == 3);
  t.at(1, 2, 3) = 7.0;
  REQUIRE(t[23] == 7.0);
  REQUIRE(t.at(0, 0, 0) == 0.0);
}

TEST_CASE("copies share storage, clone does not") {
  Tensor a = Tensor::full({4}, 1.0);
  Tensor b = a;
  b[0] = 5.0;
  REQUIRE(a[0] == 5.0);
  Tensor c = a.clone();
  c[1] = 9.0;
  REQUIRE(a[1] == 1.0);
}

TEST_CASE("reshape shares storage and checks counts") {
  Tensor a({2, 6});
  Tensor b = a.reshaped({3, 4});
  b.at(2, 3) = 3.5;
  REQUIRE(a.at(1, 5) == 3.5);
  REQUIRE_THROWS(a.reshaped({5, 5}));
}

TEST_CASE("rng streams are deterministic and keyed streams are independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng k1 = Rng::keyed(7, 1), k2 = Rng::keyed(7, 2), k1b = Rng::keyed(7, 1);
  REQUIRE(k1.next_u64() != k2.next_u64());
  REQUIRE(Rng::keyed(7, 1).next_u64() == k1b.next_u64());
}

TEST_CASE("rng normal moments") {
  Rng r(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  REQUIRE(std::abs(s / n) < 0.01);
  REQUIRE(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("uniform_int bounds and shuffle determinism") {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const int v = r.uniform_int(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
  }
  std::vector<int> v1{1, 2, 3, 4, 5, 6}, v2 = v1;
  Rng s1(9), s2(9);
  s1.shuffle(v1);
  s2.shuffle(v2);
  REQUIRE(v1 == v2);
}
