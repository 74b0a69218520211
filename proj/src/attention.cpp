#include "spikerpe/attention.hpp"

#include <bit>
#include <cmath>

namespace spikerpe {

namespace {

void check_pair(const SpikeTensor& q, const SpikeTensor& k) {
  if (q.time_steps() != k.time_steps() || q.channels() != k.channels() ||
      q.seq_len() != k.seq_len())
    throw DimensionError("attention: Q/K shape mismatch");
}

// Rows packed into 64-bit words so the score loop is XOR/AND + popcount.
using PackedRows = std::vector<std::vector<std::uint64_t>>;

PackedRows pack_rows(const BitMatrix& m) {
  const Index words = (m.cols() + 63) / 64;
  PackedRows packed(static_cast<std::size_t>(m.rows()),
                    std::vector<std::uint64_t>(static_cast<std::size_t>(words), 0));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (m(i, j)) packed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j / 64)] |=
          std::uint64_t{1} << (j % 64);
  return packed;
}

template <typename Score>
AttnMap build_map(const SpikeTensor& q, const SpikeTensor& k, Score score) {
  AttnMap map;
  map.scores.reserve(q.steps.size());
  for (std::size_t t = 0; t < q.steps.size(); ++t) {
    const PackedRows qp = pack_rows(q.steps[t]);
    const PackedRows kp = pack_rows(k.steps[t]);
    const Index l = q.seq_len();
    MatrixXi s(l, l);
    for (Index i = 0; i < l; ++i)
      for (Index j = 0; j < l; ++j)
        s(i, j) = score(qp[static_cast<std::size_t>(i)], kp[static_cast<std::size_t>(j)]);
    map.scores.push_back(std::move(s));
  }
  return map;
}

int popcount_and(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  int c = 0;
  for (std::size_t w = 0; w < a.size(); ++w) c += std::popcount(a[w] & b[w]);
  return c;
}

int popcount_xor(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  int c = 0;
  for (std::size_t w = 0; w < a.size(); ++w) c += std::popcount(a[w] ^ b[w]);
  return c;
}

SpikeTensor concat_words(const SpikeTensor& x, const std::vector<GrayWord>& words, int bits) {
  SpikeTensor out;
  out.steps.reserve(x.steps.size());
  for (const auto& m : x.steps) {
    BitMatrix e(m.rows(), m.cols() + bits);
    e.leftCols(m.cols()) = m;
    for (Index i = 0; i < m.rows(); ++i)
      for (int bpos = 0; bpos < bits; ++bpos)
        e(i, m.cols() + bpos) = words[static_cast<std::size_t>(i)].bit(bpos) ? 1 : 0;
    out.steps.push_back(std::move(e));
  }
  return out;
}

std::vector<GrayWord> sequence_words(Index l, int b) {
  std::vector<GrayWord> words;
  words.reserve(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) words.push_back(gray_encode(static_cast<std::uint64_t>(i), b));
  return words;
}

// ceil(log2(p / q)) for positive integers, clamped at 0.
int clamped_ceil_log2_ratio(std::uint64_t p, std::uint64_t q) {
  if (p <= q) return 0;
  int m = 1;
  while ((q << m) < p) ++m;
  return m;
}

}  // namespace

int default_gray_bits(Index seq_len) {
  const Index span = seq_len < 2 ? 2 : seq_len;
  int b = 1;
  while ((Index{1} << b) < span) ++b;
  return b;
}

AttnMap ssa_dot_map(const SpikeTensor& q, const SpikeTensor& k) {
  check_pair(q, k);
  return build_map(q, k, popcount_and);
}

AttnMap xnor_map(const SpikeTensor& q, const SpikeTensor& k) {
  check_pair(q, k);
  const int d = static_cast<int>(q.channels());
  return build_map(q, k, [d](const auto& a, const auto& b) { return d - popcount_xor(a, b); });
}

MatrixXi gray_positional_term(Index seq_len, int b) {
  const auto words = sequence_words(seq_len, b);
  MatrixXi term(seq_len, seq_len);
  for (Index i = 0; i < seq_len; ++i)
    for (Index j = 0; j < seq_len; ++j)
      term(i, j) = b - hamming_distance(words[static_cast<std::size_t>(i)],
                                        words[static_cast<std::size_t>(j)]);
  return term;
}

AttnMap gray_pe_map(const SpikeTensor& q, const SpikeTensor& k, int b) {
  check_pair(q, k);
  const Index l = q.seq_len();
  if ((Index{1} << b) < l)
    throw ConfigurationError("gray_pe_map: bit-width too small for sequence length");
  const auto words = sequence_words(l, b);
  return xnor_map(concat_words(q, words, b), concat_words(k, words, b));
}

MatrixXi gray_positional_term_2d(const Grid2D& grid, int b_h, int b_w) {
  const Index l = grid.h * grid.w;
  MatrixXi term(l, l);
  for (Index p = 0; p < l; ++p) {
    const auto ph = gray_encode(static_cast<std::uint64_t>(p / grid.w), b_h);
    const auto pw = gray_encode(static_cast<std::uint64_t>(p % grid.w), b_w);
    for (Index r = 0; r < l; ++r) {
      const auto rh = gray_encode(static_cast<std::uint64_t>(r / grid.w), b_h);
      const auto rw = gray_encode(static_cast<std::uint64_t>(r % grid.w), b_w);
      term(p, r) = (b_h - hamming_distance(ph, rh)) + (b_w - hamming_distance(pw, rw));
    }
  }
  return term;
}

AttnMap gray_pe_2d_map(const SpikeTensor& q, const SpikeTensor& k, const Grid2D& grid, int b_h,
                       int b_w) {
  check_pair(q, k);
  const Index l = q.seq_len();
  if (grid.h < 1 || grid.w < 1 || grid.h * grid.w != l)
    throw ConfigurationError("gray_pe_2d_map: L != h * w");
  if ((Index{1} << b_h) < grid.h || (Index{1} << b_w) < grid.w)
    throw ConfigurationError("gray_pe_2d_map: bit-width too small for grid");
  std::vector<GrayWord> hw;
  std::vector<GrayWord> ww;
  hw.reserve(static_cast<std::size_t>(l));
  ww.reserve(static_cast<std::size_t>(l));
  for (Index p = 0; p < l; ++p) {
    hw.push_back(gray_encode(static_cast<std::uint64_t>(p / grid.w), b_h));
    ww.push_back(gray_encode(static_cast<std::uint64_t>(p % grid.w), b_w));
  }
  return xnor_map(concat_words(concat_words(q, hw, b_h), ww, b_w),
                  concat_words(concat_words(k, hw, b_h), ww, b_w));
}

RelativeBias log_pe_bias(Index seq_len) {
  if (seq_len < 2) throw ConfigurationError("log_pe_bias: L must be >= 2");
  RelativeBias bias;
  bias.r.resize(seq_len, seq_len);
  for (Index i = 0; i < seq_len; ++i)
    for (Index j = 0; j < seq_len; ++j) {
      const std::uint64_t dist = static_cast<std::uint64_t>(i > j ? i - j : j - i);
      bias.r(i, j) = clamped_ceil_log2_ratio(static_cast<std::uint64_t>(seq_len - 1), dist + 1);
    }
  return bias;
}

AttnMap log_pe_map(const SpikeTensor& q, const SpikeTensor& k, const RelativeBias& bias) {
  if (bias.length() != q.seq_len()) throw DimensionError("log_pe_map: bias length mismatch");
  AttnMap map = xnor_map(q, k);
  for (auto& s : map.scores) s += bias.r;
  return map;
}

MatrixXd complete_rpe_bias(Index seq_len) {
  if (seq_len < 2) throw ConfigurationError("complete_rpe_bias: L must be >= 2");
  MatrixXd r(seq_len, seq_len);
  for (Index i = 0; i < seq_len; ++i)
    for (Index j = 0; j < seq_len; ++j)
      r(i, j) = static_cast<double>(seq_len - 1) / (std::abs(static_cast<double>(i - j)) + 1.0);
  return r;
}

std::vector<MatrixXd> attend(const AttnMap& map, const SpikeTensor& v, double sigma) {
  if (map.time_steps() != v.time_steps() || map.seq_len() != v.seq_len())
    throw DimensionError("attend: map/V shape mismatch");
  if (sigma <= 0.0) throw ConfigurationError("attend: sigma must be positive");
  std::vector<MatrixXd> out;
  out.reserve(map.scores.size());
  for (std::size_t t = 0; t < map.scores.size(); ++t)
    out.push_back(sigma * map.scores[t].cast<double>() * v.steps[t].cast<double>());
  return out;
}

}  // namespace spikerpe
