#include "spikerpe/bitcodec.hpp"

#include <doctest.h>

#include <set>

using namespace spikerpe;

TEST_CASE("gray encode hand values") {
  CHECK(to_bit_string(gray_encode(0, 3)) == "000");
  CHECK(to_bit_string(gray_encode(5, 3)) == "111");
  CHECK(to_bit_string(gray_encode(13, 4)) == "1011");
}

TEST_CASE("gray decode hand values") {
  CHECK(gray_decode(gray_encode(0, 3)) == 0);
  CHECK(gray_decode(gray_encode(5, 3)) == 5);
  CHECK(gray_decode(gray_encode(13, 4)) == 13);
}

TEST_CASE("gray round trip all widths up to 10") {
  for (int b = 1; b <= 10; ++b)
    for (std::uint64_t x = 0; x < (1ull << b); ++x)
      CHECK(gray_decode(gray_encode(x, b)) == x);
}

TEST_CASE("gray encode rejects out-of-range input") {
  CHECK_THROWS_AS(gray_encode(8, 3), std::range_error);
  CHECK_THROWS_AS(gray_encode(1, 0), ConfigurationError);
  CHECK_THROWS_AS(gray_encode(1, 33), ConfigurationError);
}

TEST_CASE("hamming distance hand values") {
  CHECK(hamming_distance(gray_encode(0, 3), gray_encode(0, 3)) == 0);
  CHECK(hamming_distance(gray_encode(1, 3), gray_encode(2, 3)) == 1);
  CHECK(hamming_distance(gray_encode(0, 3), gray_encode(4, 3)) == 2);
}

TEST_CASE("hamming distance rejects width mismatch") {
  CHECK_THROWS_AS(hamming_distance(gray_encode(1, 3), gray_encode(1, 4)), DimensionError);
}

TEST_CASE("adjacency: consecutive codes differ in one bit") {
  for (int b = 1; b <= 10; ++b)
    for (std::uint64_t x = 0; x + 1 < (1ull << b); ++x)
      CHECK(hamming_distance(gray_encode(x, b), gray_encode(x + 1, b)) == 1);
}

TEST_CASE("theorem-1 report for b_max=3") {
  const Theorem1Report report = verify_theorem1(3);
  CHECK(report.ok());
  CHECK(report.pairs_checked == 17);
  CHECK(hamming_distance(gray_encode(1, 3), gray_encode(3, 3)) == 2);  // (a=1, n=1)
}

TEST_CASE("theorem-1 exhaustive to width 12") {
  const Theorem1Report report = verify_theorem1(12);
  CHECK(report.ok());
  CHECK(report.counterexamples.empty());
  CHECK(report.checks_performed > report.pairs_checked);
}

TEST_CASE("verify_theorem1 rejects out-of-range widths") {
  CHECK_THROWS_AS(verify_theorem1(1), ConfigurationError);
  CHECK_THROWS_AS(verify_theorem1(21), ConfigurationError);
}

TEST_CASE("pigeonhole: width b distinguishes exactly 2^b positions") {
  const int b = 3;
  std::set<std::uint32_t> words;
  for (std::uint64_t x = 0; x < 8; ++x) words.insert(gray_encode(x, b).bits);
  CHECK(words.size() == 8);  // 2^b >= L: all distinct

  // Width 4 over L = 10 positions: pairs with different offsets can still
  // collide in distance, so the positional contribution is not injective.
  bool found = false;
  for (std::uint64_t i = 0; i < 10 && !found; ++i)
    for (std::uint64_t j = i + 1; j < 10 && !found; ++j)
      for (std::uint64_t i2 = 0; i2 < 10 && !found; ++i2)
        for (std::uint64_t j2 = i2 + 1; j2 < 10 && !found; ++j2) {
          if (j - i == j2 - i2) continue;
          if (hamming_distance(gray_encode(i, 4), gray_encode(j, 4)) ==
              hamming_distance(gray_encode(i2, 4), gray_encode(j2, 4)))
            found = true;
        }
  CHECK(found);
}
