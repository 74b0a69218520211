#pragma once

#include "spikerpe/bitcodec.hpp"
#include "spikerpe/types.hpp"

#include <vector>

namespace spikerpe {

// Smallest width giving every position in [0, L) a distinct Gray word.
int default_gray_bits(Index seq_len);

// scores[t](i, j) = sum_d Q[t](i, d) * K[t](j, d)
AttnMap ssa_dot_map(const SpikeTensor& q, const SpikeTensor& k);

// scores[t](i, j) = sum_d NOT(Q[t](i, d) XOR K[t](j, d)) = D - d_H(Q row, K row)
AttnMap xnor_map(const SpikeTensor& q, const SpikeTensor& k);

// L x L matrix of b - d_H(G(i), G(j)); the positional term of Gray-PE.
MatrixXi gray_positional_term(Index seq_len, int b);

// XNOR map over [Q row || G(i)] vs [K row || G(j)]. Requires 2^b >= L.
AttnMap gray_pe_map(const SpikeTensor& q, const SpikeTensor& k, int b);

// 2D variant: concatenates Gray words of the patch row and column indices.
// Positions flatten row-major over an h x w grid, L = h * w.
AttnMap gray_pe_2d_map(const SpikeTensor& q, const SpikeTensor& k, const Grid2D& grid, int b_h,
                       int b_w);

// Positional term of the 2D map: (b_h - d_H row words) + (b_w - d_H col words).
MatrixXi gray_positional_term_2d(const Grid2D& grid, int b_h, int b_w);

// r(i, j) = max(0, ceil(log2((L-1) / (|i-j|+1)))), computed in exact integer
// arithmetic. Requires L >= 2.
RelativeBias log_pe_bias(Index seq_len);

// xnor_map(Q, K) plus the bias broadcast over T.
AttnMap log_pe_map(const SpikeTensor& q, const SpikeTensor& k, const RelativeBias& bias);

// Unquantized ablation bias (L-1)/(|i-j|+1); real-valued by design.
MatrixXd complete_rpe_bias(Index seq_len);

// Per time-step product scores * V scaled by sigma; output is real-valued.
std::vector<MatrixXd> attend(const AttnMap& map, const SpikeTensor& v, double sigma);

}  // namespace spikerpe
