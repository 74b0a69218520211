#pragma once

#include "spikerpe/attention.hpp"
#include "spikerpe/autodiff.hpp"
#include "spikerpe/tasks.hpp"
#include "spikerpe/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace spikerpe {

enum class PEVariant { None, Gray, Gray2D, Log, CRPE, DotBaseline };

PEVariant pe_variant_from_string(const std::string& s);
std::string to_string(PEVariant v);

struct ModelConfig {
  int blocks = 2;
  Index d_model = 32;
  Index d_ffn = 64;
  Index time_steps = 4;
  Index seq_len = 16;
  Index feature_dim = 8;
  PEVariant pe = PEVariant::None;
  int gray_bits = 0;  // 0 selects ceil(log2(max(L, 2)))
  int gray_bits_h = 0;
  int gray_bits_w = 0;
  Grid2D grid;
  double sigma = 0.0;  // 0 selects 1/sqrt(D_effective)
  bool sigma_learnable = false;
  bool classification = true;
  Index output_dim = 8;
  LIFParams lif;
  double surrogate_alpha = 2.0;
  Index readout_pos = -1;  // sequence position the head reads; -1 selects seq_len - 1

  void validate() const;
  int effective_gray_bits() const;
  double effective_sigma() const;
  Index effective_readout_pos() const { return readout_pos >= 0 ? readout_pos : seq_len - 1; }
};

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  Index batch_size = 32;
  std::uint64_t seed = 0;
  // Stop once validation accuracy reaches this level (classification only);
  // negative disables. Keeps fixed-budget sweeps from overpaying for easy runs.
  double stop_at_accuracy = -1.0;
};

struct TrainingError : std::runtime_error {
  int epoch;
  TrainingError(int e, const std::string& what) : std::runtime_error(what), epoch(e) {}
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  MetricReport validation;
};

// Spikformer-style encoder with a selectable attention/PE variant.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Batched forward; rows of the result are per-sample predictions
  // (logits for classification, flat forecasts for regression).
  MatrixXd predict(const std::vector<MatrixXd>& inputs);

  // Binarized Q/K spikes of the first block for one sample, for inspecting
  // the attention maps the model actually sees.
  void probe_first_block(const MatrixXd& input, SpikeTensor& q_out, SpikeTensor& k_out);

  std::vector<EpochMetrics> train(const Dataset& train_set, const Dataset& val_set,
                                  const TrainConfig& train_config);

  MetricReport evaluate(const Dataset& ds, Index batch_size = 64);

  std::size_t parameter_count() const;

  void save_weights(const std::string& path, std::uint64_t config_digest) const;
  void load_weights(const std::string& path);

 private:
  struct Block {
    diff::Var wq, wk, wv, wo, w1, w2;
    diff::BatchNormState bn_q, bn_k, bn_v, bn_o, bn_1, bn_2;
  };

  diff::Var forward(diff::Tape& tape, const std::vector<MatrixXd>& inputs, bool training,
                    SpikeTensor* probe_q = nullptr, SpikeTensor* probe_k = nullptr);

  std::vector<std::pair<std::string, diff::Var>> named_parameters() const;

  ModelConfig config_;
  MatrixXd positional_bias_;  // L x L constant term per PE variant; empty for none
  diff::Var embed_w_;
  diff::BatchNormState embed_bn_;
  std::vector<Block> blocks_;
  diff::Var head_w_, head_b_;
  diff::Var sigma_var_;  // only when sigma is learnable
};

std::uint64_t fnv1a64(const std::string& s);

}  // namespace spikerpe
