#pragma once

#include "spikerpe/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spikerpe {

// Fixed-width bit vector holding the reflected Gray code of a position index.
// Least-significant bit is stored at index 0.
struct GrayWord {
  std::uint32_t bits = 0;
  int width = 0;

  bool bit(int i) const { return (bits >> i) & 1u; }
};

// G(x) = x XOR (x >> 1), represented in b bits. Requires 0 <= x < 2^b.
GrayWord gray_encode(std::uint64_t x, int b);

// Inverse of gray_encode: gray_decode(gray_encode(x, b)) == x.
std::uint64_t gray_decode(const GrayWord& g);

// Number of differing bit positions; widths must match.
int hamming_distance(const GrayWord& a, const GrayWord& b);

// Most-significant bit first, e.g. gray_encode(5, 3) -> "111".
std::string to_bit_string(const GrayWord& g);

struct Theorem1Counterexample {
  int bit_width = 0;
  std::uint64_t a = 0;
  int n = 0;
  int distance = 0;
};

struct Theorem1Report {
  int b_max = 0;
  std::uint64_t pairs_checked = 0;   // distinct (a, n) pairs with a + 2^n < 2^b_max
  std::uint64_t checks_performed = 0;  // total evaluations over every width b <= b_max
  std::vector<Theorem1Counterexample> counterexamples;

  bool ok() const { return counterexamples.empty(); }
};

// Exhaustively checks d_H(G(a), G(a + 2^n)) == (n == 0 ? 1 : 2) for every
// width b <= b_max, every n with 2^n < 2^b and every a with a + 2^n < 2^b.
Theorem1Report verify_theorem1(int b_max);

}  // namespace spikerpe
