#include "spikerpe/tasks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace spikerpe {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; avoids std::normal_distribution so streams stay stable across
// standard libraries.
double gaussian(std::mt19937_64& rng) {
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Dataset gen_offset_copy(Index l, int vocab, int k, Index n_samples, std::uint64_t seed) {
  if (k < 0 || k >= l) throw ConfigurationError("gen_offset_copy: k must satisfy 0 <= k < L");
  if (vocab < 2) throw ConfigurationError("gen_offset_copy: vocab must be >= 2");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.seq_len = l;
  ds.feature_dim = vocab;
  ds.target_dim = vocab;
  ds.classification = true;
  ds.inputs.reserve(static_cast<std::size_t>(n_samples));
  ds.labels.reserve(static_cast<std::size_t>(n_samples));
  for (Index s = 0; s < n_samples; ++s) {
    MatrixXd x = MatrixXd::Zero(l, vocab);
    int target = 0;
    for (Index pos = 0; pos < l; ++pos) {
      const int token = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
      x(pos, token) = 1.0;
      if (pos == l - 1 - k) target = token;
    }
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(target);
  }
  return ds;
}

Dataset gen_sinusoid_forecast(Index l, Index horizon, Index n_channels, Index n_samples,
                              double noise_std, std::uint64_t seed) {
  if (horizon < 1) throw ConfigurationError("gen_sinusoid_forecast: H must be >= 1");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.seq_len = l;
  ds.feature_dim = n_channels;
  ds.target_dim = horizon * n_channels;
  ds.classification = false;
  for (Index s = 0; s < n_samples; ++s) {
    MatrixXd x(l, n_channels);
    VectorXd y(horizon * n_channels);
    for (Index c = 0; c < n_channels; ++c) {
      const double f1 = 2.0 * std::numbers::pi * static_cast<double>(c + 1) / static_cast<double>(l);
      const double f2 = 2.3 * f1;
      const double phase1 = 2.0 * std::numbers::pi * uniform01(rng);
      const double phase2 = 2.0 * std::numbers::pi * uniform01(rng);
      for (Index t = 0; t < l; ++t) {
        const auto td = static_cast<double>(t);
        x(t, c) = std::sin(f1 * td + phase1) + 0.5 * std::sin(f2 * td + phase2) +
                  noise_std * gaussian(rng);
      }
      for (Index hstep = 0; hstep < horizon; ++hstep) {
        const auto td = static_cast<double>(l + hstep);
        y(c * horizon + hstep) = std::sin(f1 * td + phase1) + 0.5 * std::sin(f2 * td + phase2);
      }
    }
    ds.inputs.push_back(std::move(x));
    ds.targets.push_back(std::move(y));
  }
  return ds;
}

double metric_r2(const MatrixXd& pred, const MatrixXd& target, int* skipped_channels) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("metric_r2: shape mismatch");
  if (target.rows() < 2) throw NumericError("metric_r2: need at least 2 samples");
  double ratio_sum = 0.0;
  std::int64_t counted = 0;
  int skipped_cols = 0;
  for (Index c = 0; c < target.cols(); ++c) {
    const double mean = target.col(c).mean();
    const double var = (target.col(c).array() - mean).square().sum();
    if (var == 0.0) {
      // Constant column: the per-element baseline is undefined; exclude it
      // unless the prediction is exact there.
      if ((pred.col(c) - target.col(c)).squaredNorm() > 0.0) {
        ++skipped_cols;
        continue;
      }
      counted += target.rows();
      continue;
    }
    for (Index m = 0; m < target.rows(); ++m) {
      const double denom = (target(m, c) - mean) * (target(m, c) - mean);
      const double err = (target(m, c) - pred(m, c)) * (target(m, c) - pred(m, c));
      if (denom == 0.0) continue;  // per-element baseline undefined; excluded
      ratio_sum += err / denom;
      ++counted;
    }
  }
  if (skipped_channels) *skipped_channels = skipped_cols;
  if (counted == 0) throw NumericError("metric_r2: target has no variance anywhere");
  return 1.0 - ratio_sum / static_cast<double>(counted);
}

double metric_rse(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("metric_rse: shape mismatch");
  const Eigen::RowVectorXd mean = target.colwise().mean();
  const double num = (target - pred).squaredNorm();
  const double den = (target.rowwise() - mean).squaredNorm();
  if (den == 0.0) throw NumericError("metric_rse: zero variance in target");
  return std::sqrt(num / den);
}

std::string MetricReport::to_json() const {
  std::ostringstream os;
  os.precision(17);
  os << "{";
  bool first = true;
  const auto emit = [&os, &first](const char* key, double v) {
    if (!first) os << ", ";
    first = false;
    os << "\"" << key << "\": " << v;
  };
  if (r2) emit("r2", *r2);
  if (rse) emit("rse", *rse);
  if (accuracy) emit("accuracy", *accuracy);
  emit("loss", loss);
  os << "}";
  return os.str();
}

namespace {
constexpr char kDatasetMagic[4] = {'S', 'P', 'K', 'D'};
}

void save_cached_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("save_cached_dataset: cannot open " + path);
  out.write(kDatasetMagic, 4);
  const auto write_i64 = [&out](std::int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  write_i64(ds.classification ? 1 : 0);
  write_i64(ds.size());
  write_i64(ds.seq_len);
  write_i64(ds.feature_dim);
  write_i64(ds.target_dim);
  for (const auto& x : ds.inputs)
    out.write(reinterpret_cast<const char*>(x.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(x.size())));
  if (ds.classification) {
    for (int label : ds.labels) write_i64(label);
  } else {
    for (const auto& y : ds.targets)
      out.write(reinterpret_cast<const char*>(y.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(y.size())));
  }
}

bool load_cached_dataset(const std::string& path, Dataset& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0) return false;
  const auto read_i64 = [&in]() {
    std::int64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  Dataset ds;
  ds.classification = read_i64() != 0;
  const std::int64_t n = read_i64();
  ds.seq_len = read_i64();
  ds.feature_dim = read_i64();
  ds.target_dim = read_i64();
  for (std::int64_t s = 0; s < n; ++s) {
    MatrixXd x(ds.seq_len, ds.feature_dim);
    in.read(reinterpret_cast<char*>(x.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(x.size())));
    ds.inputs.push_back(std::move(x));
  }
  if (ds.classification) {
    for (std::int64_t s = 0; s < n; ++s) ds.labels.push_back(static_cast<int>(read_i64()));
  } else {
    for (std::int64_t s = 0; s < n; ++s) {
      VectorXd y(ds.target_dim);
      in.read(reinterpret_cast<char*>(y.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(y.size())));
      ds.targets.push_back(std::move(y));
    }
  }
  if (!in) return false;
  out = std::move(ds);
  return true;
}

}  // namespace spikerpe
