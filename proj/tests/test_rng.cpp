#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdint>
#include <set>

#include "densepath/rng.hpp"

using namespace densepath;

TEST_CASE("philox4x32 reproduces the published known-answer vectors") {
  const std::array<std::uint32_t, 4> zero_ctr{0u, 0u, 0u, 0u};
  const std::array<std::uint32_t, 2> zero_key{0u, 0u};
  CHECK(philox4x32(zero_ctr, zero_key) ==
        std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});

  const std::array<std::uint32_t, 4> ones_ctr{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu};
  const std::array<std::uint32_t, 2> ones_key{0xffffffffu, 0xffffffffu};
  CHECK(philox4x32(ones_ctr, ones_key) ==
        std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});

  const std::array<std::uint32_t, 4> pi_ctr{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u};
  const std::array<std::uint32_t, 2> pi_key{0xa4093822u, 0x299f31d0u};
  CHECK(philox4x32(pi_ctr, pi_key) ==
        std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("philox4x32 is a pure function of counter and key") {
  const std::array<std::uint32_t, 4> ctr{3u, 1u, 4u, 1u};
  const std::array<std::uint32_t, 2> key{5u, 9u};
  CHECK(philox4x32(ctr, key) == philox4x32(ctr, key));
  CHECK(philox4x32(ctr, key) != philox4x32(ctr, {5u, 10u}));
  CHECK(philox4x32(ctr, key) != philox4x32({3u, 1u, 4u, 2u}, key));
}

TEST_CASE("mix64 derives distinct well-spread seeds") {
  static_assert(mix64(0) != 0, "mix64 must be usable in constant expressions");
  std::set<std::uint64_t> seen;
  for (std::uint64_t x = 0; x < 1000; ++x) seen.insert(mix64(x));
  CHECK(seen.size() == 1000);

  CHECK(mix64(1, 2) != mix64(2, 1));
  CHECK(mix64(1, 2) != mix64(1, 3));
  CHECK(mix64(7, 8, 9) == mix64(mix64(7, 8), 9));
  CHECK(mix64(7, 8, 9) != mix64(7, 9, 8));
}

TEST_CASE("rng stream draws philox blocks in counter order") {
  RngStream rng(42, 7);
  const std::array<std::uint32_t, 2> key{42u, 0u};
  const auto block0 = philox4x32({0u, 0u, 7u, 0u}, key);
  const auto block1 = philox4x32({1u, 0u, 7u, 0u}, key);
  for (int i = 0; i < 4; ++i) CHECK(rng.next_u32() == block0[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 4; ++i) CHECK(rng.next_u32() == block1[static_cast<std::size_t>(i)]);
}

TEST_CASE("rng stream key splits a 64-bit seed and next_u64 packs low then high") {
  const std::uint64_t seed = 0x0123456789abcdefULL;
  RngStream rng(seed);
  const auto block = philox4x32({0u, 0u, 0u, 0u}, {0x89abcdefu, 0x01234567u});
  const std::uint64_t expected = (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
  CHECK(rng.next_u64() == expected);
}

TEST_CASE("streams are deterministic and independent") {
  RngStream a(11, 0);
  RngStream b(11, 0);
  RngStream c(11, 1);
  RngStream d(12, 0);
  bool c_differs = false;
  bool d_differs = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint32_t va = a.next_u32();
    CHECK(va == b.next_u32());
    c_differs = c_differs || va != c.next_u32();
    d_differs = d_differs || va != d.next_u32();
  }
  CHECK(c_differs);
  CHECK(d_differs);
}

TEST_CASE("uniform stays in range and is roughly centered") {
  RngStream rng(123);
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  mean /= n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.05));

  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u < 3.0);
  }
}

TEST_CASE("below is bounded and covers small ranges") {
  RngStream rng(7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.below(10);
    CHECK(v < 10);
    seen.insert(v);
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("below(1) returns 0 without consuming the stream") {
  RngStream consumed(9);
  RngStream fresh(9);
  CHECK(consumed.below(1) == 0);
  CHECK(consumed.below(0) == 0);
  CHECK(consumed.next_u32() == fresh.next_u32());
}
