#include <doctest.h>

#include "icld/rng.hpp"

using namespace icld;

TEST_CASE("same seed reproduces the draw sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("forks are independent of parent draw position") {
  Rng a(7);
  Rng child1 = a.fork("demo", 3);
  a.next_u64();
  Rng child2 = Rng(7).fork("demo", 3);
  CHECK(child1.next_u64() == child2.next_u64());
}

TEST_CASE("distinct labels give distinct streams") {
  Rng a(7);
  CHECK(a.fork("x").next_u64() != a.fork("y").next_u64());
  CHECK(a.fork("x", 0).next_u64() != a.fork("x", 1).next_u64());
}

TEST_CASE("below stays in range and covers values") {
  Rng a(3);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 1000; ++i) seen[a.below(10)]++;
  for (int c : seen) CHECK(c > 0);
}
