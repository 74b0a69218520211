#pragma once

#include "spikerpe/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spikerpe {

// Piecewise-linear fixed-point approximation of log2 over integer inputs
// [1, 2^N). Segment s covers u with (u * K) >> N == s; each segment stores
// one quantized (a, b) pair for y = a*u + b. Evaluation is integer-only:
// multiply, shift, add.
struct Log2LUT {
  int n_bits = 0;      // input width N
  int k_segments = 0;  // K
  int p_bits = 0;      // parameter width P

  // Scaling convention derived from P: slopes carry P-1 fractional bits,
  // intercepts P-5 (floored at 0). Magnitudes must fit in P-1 bits.
  int frac_a = 0;
  int frac_b = 0;

  std::vector<std::int32_t> a;  // per-segment slope, frac_a fractional bits
  std::vector<std::int32_t> b;  // per-segment intercept, frac_b fractional bits

  double max_abs_error = 0.0;  // vs exact log2 over [1, 2^N), via the integer path
  bool ceil_exact = false;     // ceil(lut) == ceil(log2) for all integers in [2, 2^N)

  // K * (N + 2P) bits: each entry accounts one N-bit boundary plus two
  // P-bit parameters.
  std::uint64_t storage_bits() const {
    return static_cast<std::uint64_t>(k_segments) *
           (static_cast<std::uint64_t>(n_bits) + 2u * static_cast<std::uint64_t>(p_bits));
  }

  int segment_of(std::uint32_t u) const {
    return static_cast<int>((static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(k_segments)) >>
                            n_bits);
  }

  // Fixed-point log2 estimate with frac_b fractional bits.
  std::int64_t eval_fp(std::uint32_t u) const;

  // ceil(log2(u)) through the table; integer arithmetic only.
  int ceil_log2(std::uint32_t u) const;
};

// Least-squares fit per segment, coefficients quantized to P-bit sign-magnitude
// fixed point, then nudged within a small tick window so the ceiled outputs
// track exact log2 wherever the segment permits.
Log2LUT build_log2_lut(int n, int k, int p);

// Eq.-13 bias evaluated through the table: the ratio rounds up to an integer
// LUT input, which preserves the ceiled log exactly when the table is
// ceil-exact. Requires L - 1 < 2^N.
RelativeBias lut_log_pe_bias(Index seq_len, const Log2LUT& lut);

// File format: header N, K, P as little-endian u16, then K (a, b) pairs of
// P-bit sign-magnitude values packed big-endian within bytes.
void save_lut(const Log2LUT& lut, const std::string& path);
Log2LUT load_lut(const std::string& path);

}  // namespace spikerpe
