#pragma once

#include "spikerpe/lut.hpp"
#include "spikerpe/types.hpp"

#include <string>
#include <vector>

namespace spikerpe {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string details;
};

// Exhaustive Theorem-1 oracle over widths up to 12.
CheckResult check_theorem1();

// xnor score == D - d_H for 10^4 random row pairs per D in {4, 32, 256}.
CheckResult check_xnor_duality();

// gray_pe_map == xnor_map + (b - d_H(G(i), G(j))) entrywise, random Q/K over
// a sweep of sequence lengths up to 64.
CheckResult check_gray_decomposition();

// The positional term is b-1 for |i-j| = 1 and b-2 for |i-j| = 2^n, n >= 1,
// at every position pair.
CheckResult check_gray_power_of_two();

// Log-PE bias: symmetric, non-negative, non-increasing in |i-j|, diagonal
// ceil(log2(L-1)) for L >= 3; every L in [2, 512].
CheckResult check_log_pe_matrix();

// Without PE, permuting positions permutes map rows/columns identically;
// with Gray-PE some permutation changes the map. L = 8 random instances.
CheckResult check_permutation_property();

// Finite-difference checks of every smooth layer at tolerance 1e-4.
CheckResult check_gradients();

// Surrogate peak alpha/2, evenness, unit integral.
CheckResult check_surrogate();

// Storage accounting K*(N+2P), plus the error-vs-K scan.
CheckResult check_lut_storage();

// The pinned (N=9, K=64, P=16) table reproduces log_pe_bias exactly for all
// L in [2, 512]; a coarse (K=1, P=4) table does not at L=168.
CheckResult check_lut_equivalence();

// Frozen examples and the monotone-quality property for R^2 / RSE.
CheckResult check_metrics();

// The (N, K, P) configuration the equivalence check pins.
Log2LUT recorded_exact_lut();

// scope: all | theorem1 | attention | gradients | lut | metrics
std::vector<CheckResult> verify_scope(const std::string& scope);

std::string results_to_json(const std::vector<CheckResult>& results);

}  // namespace spikerpe
