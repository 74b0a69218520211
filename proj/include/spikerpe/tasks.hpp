#pragma once

#include "spikerpe/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace spikerpe {

// A batchable synthetic dataset. Inputs are per-sample L x F matrices.
// Classification targets are class labels; regression targets are flat
// (horizon * channels) vectors laid out channel-major.
struct Dataset {
  std::vector<MatrixXd> inputs;
  std::vector<int> labels;        // classification
  std::vector<VectorXd> targets;  // regression
  Index seq_len = 0;
  Index feature_dim = 0;
  Index target_dim = 0;  // classes or horizon * channels
  bool classification = true;

  Index size() const { return static_cast<Index>(inputs.size()); }
};

// One-hot token sequences; target is the token at position L - 1 - k.
Dataset gen_offset_copy(Index l, int vocab, int k, Index n_samples, std::uint64_t seed);

// Windows of mixed sinusoids plus Gaussian noise; target is the next H
// values of every channel.
Dataset gen_sinusoid_forecast(Index l, Index horizon, Index n_channels, Index n_samples,
                              double noise_std, std::uint64_t seed);

struct MetricReport {
  std::optional<double> r2;
  std::optional<double> rse;
  std::optional<double> accuracy;
  double loss = 0.0;
  int skipped_channels = 0;  // zero-variance (c, l) columns excluded from R^2

  std::string to_json() const;
};

// Mean over samples and (channel, horizon) positions of
// 1 - (Y - Yhat)^2 / (Y - Ybar_{c,l})^2 with Ybar the per-column sample mean.
// Elements where Y equals the column mean have an undefined per-element
// baseline and are excluded from the mean; all-constant columns count as
// perfect when predicted exactly and are otherwise skipped and reported.
double metric_r2(const MatrixXd& pred, const MatrixXd& target, int* skipped_channels = nullptr);

// sqrt(sum ||Y - Yhat||^2 / sum ||Y - Ybar||^2) over the whole test block.
double metric_rse(const MatrixXd& pred, const MatrixXd& target);

// Binary dataset cache keyed by a config digest; returns true on a hit.
bool load_cached_dataset(const std::string& path, Dataset& out);
void save_cached_dataset(const std::string& path, const Dataset& ds);

}  // namespace spikerpe
