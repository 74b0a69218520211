#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace spikerpe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

// One time-step slice is an L x D matrix of {0,1} entries.
using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strictly binary activation tensor indexed [time-step, sequence, channel].
struct SpikeTensor {
  std::vector<BitMatrix> steps;  // T matrices of shape L x D

  SpikeTensor() = default;
  SpikeTensor(Index t, Index l, Index d) : steps(static_cast<std::size_t>(t), BitMatrix::Zero(l, d)) {}

  Index time_steps() const { return static_cast<Index>(steps.size()); }
  Index seq_len() const { return steps.empty() ? 0 : steps.front().rows(); }
  Index channels() const { return steps.empty() ? 0 : steps.front().cols(); }

  bool is_binary() const {
    for (const auto& m : steps)
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
          if (m(i, j) > 1) return false;
    return true;
  }
};

// Non-negative integer attention scores, [T, L, L].
struct AttnMap {
  std::vector<MatrixXi> scores;

  Index time_steps() const { return static_cast<Index>(scores.size()); }
  Index seq_len() const { return scores.empty() ? 0 : scores.front().rows(); }
};

// Integer L x L matrix of Log-PE values; symmetric, entries depend on |i-j| only.
struct RelativeBias {
  MatrixXi r;
  Index length() const { return r.rows(); }
};

// Patch grid for the 2D positional encoding; L = h * w, row-major flattening.
struct Grid2D {
  Index h = 1;
  Index w = 1;
};

}  // namespace spikerpe
