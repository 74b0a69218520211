#include "spikerpe/bitcodec.hpp"

#include <bit>
#include <stdexcept>

namespace spikerpe {

GrayWord gray_encode(std::uint64_t x, int b) {
  if (b <= 0 || b > 32) throw ConfigurationError("gray_encode: bit-width must be in [1, 32]");
  if (x >= (std::uint64_t{1} << b))
    throw std::range_error("gray_encode: value does not fit in " + std::to_string(b) + " bits");
  return GrayWord{static_cast<std::uint32_t>(x ^ (x >> 1)), b};
}

std::uint64_t gray_decode(const GrayWord& g) {
  std::uint32_t x = g.bits;
  for (int shift = 1; shift < g.width; shift <<= 1) x ^= x >> shift;
  return x;
}

int hamming_distance(const GrayWord& a, const GrayWord& b) {
  if (a.width != b.width) throw DimensionError("hamming_distance: width mismatch");
  return std::popcount(a.bits ^ b.bits);
}

std::string to_bit_string(const GrayWord& g) {
  std::string s(static_cast<std::size_t>(g.width), '0');
  for (int i = 0; i < g.width; ++i)
    if (g.bit(i)) s[static_cast<std::size_t>(g.width - 1 - i)] = '1';
  return s;
}

Theorem1Report verify_theorem1(int b_max) {
  if (b_max < 2 || b_max > 20) throw ConfigurationError("verify_theorem1: b_max must be in [2, 20]");
  Theorem1Report report;
  report.b_max = b_max;
  for (int b = 2; b <= b_max; ++b) {
    const std::uint64_t limit = std::uint64_t{1} << b;
    for (int n = 0; (std::uint64_t{1} << n) < limit; ++n) {
      const std::uint64_t step = std::uint64_t{1} << n;
      for (std::uint64_t a = 0; a + step < limit; ++a) {
        const int d = hamming_distance(gray_encode(a, b), gray_encode(a + step, b));
        ++report.checks_performed;
        if (b == b_max) ++report.pairs_checked;
        const int expected = (n == 0) ? 1 : 2;
        if (d != expected)
          report.counterexamples.push_back({b, a, n, d});
      }
    }
  }
  return report;
}

}  // namespace spikerpe
