#pragma once

#include "spikerpe/model.hpp"
#include "spikerpe/tasks.hpp"

#include <string>

namespace spikerpe {

struct TaskSpec {
  std::string name = "offset-copy";  // or "sinusoid"
  Index seq_len = 16;
  int vocab = 8;
  int offset_k = 3;
  Index n_train = 512;
  Index n_val = 256;
  Index channels = 2;
  Index horizon = 4;
  double noise_std = 0.1;
};

struct ExperimentConfig {
  ModelConfig model;
  TaskSpec task;
  TrainConfig train;
  std::string output_dir = "out";
  std::string canonical;  // canonicalized JSON, input to the digest

  std::uint64_t digest() const { return fnv1a64(canonical); }
};

// Parses and validates the experiment config file (JSON, sections per
// module). Unknown keys are rejected; train.seed is mandatory.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Train/validation generators draw from separate seed streams.
Dataset make_train_dataset(const TaskSpec& task, std::uint64_t seed);
Dataset make_val_dataset(const TaskSpec& task, std::uint64_t seed);

}  // namespace spikerpe
