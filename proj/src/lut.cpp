#include "spikerpe/lut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace spikerpe {

namespace {

int exact_ceil_log2(std::uint32_t u) {
  int m = 0;
  while ((std::uint64_t{1} << m) < u) ++m;
  return m;
}

struct SegmentRange {
  std::uint32_t lo;  // inclusive
  std::uint32_t hi;  // exclusive
};

SegmentRange segment_range(int s, int n, int k) {
  // u belongs to segment (u * K) >> N; invert by ceil-dividing the boundaries.
  const std::uint64_t span = std::uint64_t{1} << n;
  const auto lo = static_cast<std::uint32_t>((static_cast<std::uint64_t>(s) * span + k - 1) / k);
  const auto hi = static_cast<std::uint32_t>((static_cast<std::uint64_t>(s + 1) * span + k - 1) / k);
  return {std::max<std::uint32_t>(lo, 1), static_cast<std::uint32_t>(std::min<std::uint64_t>(hi, span))};
}

std::int32_t quantize(double v, int frac, int p_bits) {
  const double scaled = std::round(v * static_cast<double>(std::int64_t{1} << frac));
  const double limit = static_cast<double>((std::int64_t{1} << (p_bits - 1)) - 1);
  if (std::abs(scaled) > limit) throw ConfigurationError("build_log2_lut: coefficient overflow");
  return static_cast<std::int32_t>(scaled);
}

struct SegmentQuality {
  int ceil_mismatches = 0;
  double max_abs_error = 0.0;
};

SegmentQuality measure_segment(const Log2LUT& lut, int s, std::int32_t aq, std::int32_t bq) {
  Log2LUT probe = lut;
  probe.a[static_cast<std::size_t>(s)] = aq;
  probe.b[static_cast<std::size_t>(s)] = bq;
  SegmentQuality quality;
  const auto range = segment_range(s, lut.n_bits, lut.k_segments);
  const double scale = static_cast<double>(std::int64_t{1} << lut.frac_b);
  for (std::uint32_t u = range.lo; u < range.hi; ++u) {
    const double approx = static_cast<double>(probe.eval_fp(u)) / scale;
    quality.max_abs_error = std::max(quality.max_abs_error, std::abs(approx - std::log2(u)));
    if (u >= 2 && probe.ceil_log2(u) != exact_ceil_log2(u)) ++quality.ceil_mismatches;
  }
  return quality;
}

void refresh_stats(Log2LUT& lut) {
  lut.max_abs_error = 0.0;
  lut.ceil_exact = true;
  const double scale = static_cast<double>(std::int64_t{1} << lut.frac_b);
  const std::uint64_t span = std::uint64_t{1} << lut.n_bits;
  for (std::uint64_t u = 1; u < span; ++u) {
    const auto ui = static_cast<std::uint32_t>(u);
    const double approx = static_cast<double>(lut.eval_fp(ui)) / scale;
    lut.max_abs_error = std::max(lut.max_abs_error, std::abs(approx - std::log2(static_cast<double>(u))));
    if (u >= 2 && lut.ceil_log2(ui) != exact_ceil_log2(ui)) lut.ceil_exact = false;
  }
}

}  // namespace

std::int64_t Log2LUT::eval_fp(std::uint32_t u) const {
  const auto s = static_cast<std::size_t>(segment_of(u));
  const std::int64_t prod = static_cast<std::int64_t>(a[s]) * static_cast<std::int64_t>(u);
  return (prod >> (frac_a - frac_b)) + static_cast<std::int64_t>(b[s]);
}

int Log2LUT::ceil_log2(std::uint32_t u) const {
  const std::int64_t y = eval_fp(u);
  return static_cast<int>((y + ((std::int64_t{1} << frac_b) - 1)) >> frac_b);
}

Log2LUT build_log2_lut(int n, int k, int p) {
  if (n < 1 || n > 16) throw ConfigurationError("build_log2_lut: N must be in [1, 16]");
  if (k < 1 || static_cast<std::int64_t>(k) > (std::int64_t{1} << n))
    throw ConfigurationError("build_log2_lut: K must be in [1, 2^N]");
  if (p < 4) throw ConfigurationError("build_log2_lut: P must be >= 4");

  Log2LUT lut;
  lut.n_bits = n;
  lut.k_segments = k;
  lut.p_bits = p;
  lut.frac_a = p - 1;
  lut.frac_b = std::max(0, p - 5);
  lut.a.assign(static_cast<std::size_t>(k), 0);
  lut.b.assign(static_cast<std::size_t>(k), 0);

  for (int s = 0; s < k; ++s) {
    const auto range = segment_range(s, n, k);
    if (range.lo >= range.hi) continue;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double count = static_cast<double>(range.hi - range.lo);
    for (std::uint32_t u = range.lo; u < range.hi; ++u) {
      const double x = static_cast<double>(u);
      const double y = std::log2(x);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    double slope = 0.0;
    double intercept = sy / count;
    const double det = count * sxx - sx * sx;
    if (det > 0 && count > 1) {
      slope = (count * sxy - sx * sy) / det;
      intercept = (sy - slope * sx) / count;
    }
    lut.a[static_cast<std::size_t>(s)] = quantize(slope, lut.frac_a, p);
    lut.b[static_cast<std::size_t>(s)] = quantize(intercept, lut.frac_b, p);
  }

  // The least-squares line can sit on the wrong side of an integer boundary
  // after the ceiling, e.g. slightly above log2 at a power of two. Where the
  // quantized fit mismatches, re-solve the segment: scan candidate slopes and
  // derive the intercept interval that keeps every ceiled output exact, then
  // pick the feasible pair with the smallest max error. Falls back to the
  // least-squares fit when no quantized line can satisfy the constraints.
  const std::int64_t mag_limit = (std::int64_t{1} << (p - 1)) - 1;
  const int shift = lut.frac_a - lut.frac_b;
  const double fb_scale = static_cast<double>(std::int64_t{1} << lut.frac_b);
  for (int s = 0; s < k; ++s) {
    const auto si = static_cast<std::size_t>(s);
    const auto range = segment_range(s, n, k);
    if (range.lo >= range.hi) continue;
    if (measure_segment(lut, s, lut.a[si], lut.b[si]).ceil_mismatches == 0) continue;

    const double ln2 = std::log(2.0);
    const double fa_scale = static_cast<double>(std::int64_t{1} << lut.frac_a);
    std::int64_t a_min =
        static_cast<std::int64_t>(std::floor(fa_scale / (static_cast<double>(range.hi) * ln2))) -
        512;
    std::int64_t a_max =
        static_cast<std::int64_t>(std::ceil(fa_scale / (static_cast<double>(range.lo) * ln2))) +
        512;
    a_min = std::max<std::int64_t>(a_min, 0);
    a_max = std::min(a_max, mag_limit);
    const std::int64_t width = range.hi - range.lo;
    if ((a_max - a_min + 1) * width > 50'000'000) continue;  // keep the LSQ fit

    bool found = false;
    double best_err = std::numeric_limits<double>::infinity();
    std::int64_t best_a = 0, best_b = 0;
    for (std::int64_t ca = a_min; ca <= a_max; ++ca) {
      std::int64_t b_lo = -mag_limit;
      std::int64_t b_hi = mag_limit;
      double r_min = std::numeric_limits<double>::infinity();
      double r_max = -std::numeric_limits<double>::infinity();
      for (std::uint32_t u = range.lo; u < range.hi; ++u) {
        const std::int64_t term = (ca * static_cast<std::int64_t>(u)) >> shift;
        const double r = static_cast<double>(term) - std::log2(static_cast<double>(u)) * fb_scale;
        r_min = std::min(r_min, r);
        r_max = std::max(r_max, r);
        if (u >= 2) {
          const std::int64_t m = exact_ceil_log2(u);
          b_lo = std::max(b_lo, ((m - 1) << lut.frac_b) + 1 - term);
          b_hi = std::min(b_hi, (m << lut.frac_b) - term);
        }
      }
      if (b_lo > b_hi) continue;
      const auto ideal = static_cast<std::int64_t>(std::llround(-(r_min + r_max) / 2.0));
      const std::int64_t cb = std::clamp(ideal, b_lo, b_hi);
      const double err =
          std::max(std::abs(r_min + static_cast<double>(cb)),
                   std::abs(r_max + static_cast<double>(cb))) /
          fb_scale;
      if (err < best_err) {
        best_err = err;
        best_a = ca;
        best_b = cb;
        found = true;
      }
    }
    if (found) {
      lut.a[si] = static_cast<std::int32_t>(best_a);
      lut.b[si] = static_cast<std::int32_t>(best_b);
    }
  }

  refresh_stats(lut);
  return lut;
}

RelativeBias lut_log_pe_bias(Index seq_len, const Log2LUT& lut) {
  if (seq_len < 2) throw ConfigurationError("lut_log_pe_bias: L must be >= 2");
  if (static_cast<std::uint64_t>(seq_len - 1) >= (std::uint64_t{1} << lut.n_bits))
    throw ConfigurationError("lut_log_pe_bias: sequence length out of LUT range");
  const auto p = static_cast<std::uint64_t>(seq_len - 1);
  RelativeBias bias;
  bias.r.resize(seq_len, seq_len);
  for (Index i = 0; i < seq_len; ++i)
    for (Index j = 0; j < seq_len; ++j) {
      const std::uint64_t q = static_cast<std::uint64_t>(i > j ? i - j : j - i) + 1;
      const std::uint64_t ratio_up = (p + q - 1) / q;  // ceil((L-1)/(|i-j|+1))
      bias.r(i, j) = ratio_up <= 1
                         ? 0
                         : std::max(0, lut.ceil_log2(static_cast<std::uint32_t>(ratio_up)));
    }
  return bias;
}

namespace {

class BitPacker {
 public:
  void put(std::uint32_t value, int bits) {
    for (int i = bits - 1; i >= 0; --i) {
      cur_ = static_cast<std::uint8_t>((cur_ << 1) | ((value >> i) & 1u));
      if (++fill_ == 8) {
        bytes_.push_back(cur_);
        cur_ = 0;
        fill_ = 0;
      }
    }
  }
  std::vector<std::uint8_t> finish() {
    if (fill_ > 0) {
      bytes_.push_back(static_cast<std::uint8_t>(cur_ << (8 - fill_)));
      cur_ = 0;
      fill_ = 0;
    }
    return bytes_;
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint8_t cur_ = 0;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}
  std::uint32_t get(int bits) {
    std::uint32_t v = 0;
    for (int i = 0; i < bits; ++i) {
      const std::size_t byte = pos_ / 8;
      const int bit = 7 - static_cast<int>(pos_ % 8);
      v = (v << 1) | ((bytes_.at(byte) >> bit) & 1u);
      ++pos_;
    }
    return v;
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t to_sign_magnitude(std::int32_t v, int p) {
  const std::uint32_t mag = static_cast<std::uint32_t>(std::abs(v));
  return (v < 0 ? (std::uint32_t{1} << (p - 1)) : 0u) | mag;
}

std::int32_t from_sign_magnitude(std::uint32_t v, int p) {
  const std::uint32_t sign_bit = std::uint32_t{1} << (p - 1);
  const auto mag = static_cast<std::int32_t>(v & (sign_bit - 1));
  return (v & sign_bit) ? -mag : mag;
}

}  // namespace

void save_lut(const Log2LUT& lut, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("save_lut: cannot open " + path);
  const auto write_u16 = [&out](std::uint16_t v) {
    const std::uint8_t le[2] = {static_cast<std::uint8_t>(v & 0xff),
                                static_cast<std::uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(le), 2);
  };
  write_u16(static_cast<std::uint16_t>(lut.n_bits));
  write_u16(static_cast<std::uint16_t>(lut.k_segments));
  write_u16(static_cast<std::uint16_t>(lut.p_bits));
  BitPacker packer;
  for (int s = 0; s < lut.k_segments; ++s) {
    packer.put(to_sign_magnitude(lut.a[static_cast<std::size_t>(s)], lut.p_bits), lut.p_bits);
    packer.put(to_sign_magnitude(lut.b[static_cast<std::size_t>(s)], lut.p_bits), lut.p_bits);
  }
  const auto bytes = packer.finish();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Log2LUT load_lut(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("load_lut: cannot open " + path);
  const auto read_u16 = [&in]() {
    std::uint8_t le[2];
    in.read(reinterpret_cast<char*>(le), 2);
    return static_cast<std::uint16_t>(le[0] | (le[1] << 8));
  };
  Log2LUT lut;
  lut.n_bits = read_u16();
  lut.k_segments = read_u16();
  lut.p_bits = read_u16();
  if (lut.n_bits < 1 || lut.n_bits > 16 || lut.k_segments < 1 || lut.p_bits < 4)
    throw ConfigurationError("load_lut: malformed header");
  lut.frac_a = lut.p_bits - 1;
  lut.frac_b = std::max(0, lut.p_bits - 5);
  std::vector<std::uint8_t> bytes((static_cast<std::size_t>(lut.k_segments) * 2 *
                                       static_cast<std::size_t>(lut.p_bits) + 7) / 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ConfigurationError("load_lut: truncated file");
  BitReader reader(std::move(bytes));
  lut.a.resize(static_cast<std::size_t>(lut.k_segments));
  lut.b.resize(static_cast<std::size_t>(lut.k_segments));
  for (int s = 0; s < lut.k_segments; ++s) {
    lut.a[static_cast<std::size_t>(s)] = from_sign_magnitude(reader.get(lut.p_bits), lut.p_bits);
    lut.b[static_cast<std::size_t>(s)] = from_sign_magnitude(reader.get(lut.p_bits), lut.p_bits);
  }
  refresh_stats(lut);
  return lut;
}

}  // namespace spikerpe
