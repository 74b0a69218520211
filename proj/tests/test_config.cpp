#include "spikerpe/config.hpp"

#include "matrix_eq.hpp"

#include <doctest.h>

using namespace spikerpe;

namespace {

const char* kValid = R"({
  "task": {"name": "offset-copy", "L": 16, "vocab": 8, "k": 3, "n_train": 64, "n_val": 32},
  "model": {"pe_variant": "gray", "d_model": 16, "T": 2},
  "neuron": {"tau": 2.0},
  "train": {"epochs": 5, "lr": 0.001, "batch_size": 16, "seed": 7}
})";

}  // namespace

TEST_CASE("valid config parses and derives model geometry") {
  const ExperimentConfig cfg = parse_experiment_config(kValid);
  CHECK(cfg.task.seq_len == 16);
  CHECK(cfg.model.pe == PEVariant::Gray);
  CHECK(cfg.model.seq_len == 16);
  CHECK(cfg.model.feature_dim == 8);
  CHECK(cfg.model.output_dim == 8);
  CHECK(cfg.model.classification);
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.digest() == parse_experiment_config(kValid).digest());
}

TEST_CASE("missing seed is rejected") {
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"epochs": 1}})"), ConfigurationError);
  CHECK_THROWS_AS(parse_experiment_config(R"({})"), ConfigurationError);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"seed": 1, "momentum": 0.9}})"),
                  ConfigurationError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"seed": 1}, "optimizer": {}})"),
                  ConfigurationError);
}

TEST_CASE("malformed json is a configuration error") {
  CHECK_THROWS_AS(parse_experiment_config("{"), ConfigurationError);
}

TEST_CASE("sigma accepts a number or the learnable marker") {
  const auto learnable = parse_experiment_config(
      R"({"model": {"sigma": "learnable"}, "train": {"seed": 1}})");
  CHECK(learnable.model.sigma_learnable);
  const auto fixed = parse_experiment_config(
      R"({"model": {"sigma": 0.25}, "train": {"seed": 1}})");
  CHECK(fixed.model.sigma == doctest::Approx(0.25));
  CHECK_THROWS_AS(
      parse_experiment_config(R"({"model": {"sigma": "tiny"}, "train": {"seed": 1}})"),
      ConfigurationError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"model": {"sigma": -1}, "train": {"seed": 1}})"),
                  ConfigurationError);
}

TEST_CASE("readout position defaults to the last position and is bounded") {
  const auto def = parse_experiment_config(R"({"train": {"seed": 1}})");
  CHECK(def.model.effective_readout_pos() == def.model.seq_len - 1);
  const auto mid = parse_experiment_config(
      R"({"task": {"L": 16}, "model": {"readout_pos": 6}, "train": {"seed": 1}})");
  CHECK(mid.model.effective_readout_pos() == 6);
  CHECK_THROWS_AS(
      parse_experiment_config(
          R"({"task": {"L": 16}, "model": {"readout_pos": 16}, "train": {"seed": 1}})"),
      ConfigurationError);
}

TEST_CASE("train and validation streams are disjoint") {
  const ExperimentConfig cfg = parse_experiment_config(kValid);
  const Dataset train = make_train_dataset(cfg.task, cfg.train.seed);
  const Dataset val = make_val_dataset(cfg.task, cfg.train.seed);
  CHECK(train.size() == 64);
  CHECK(val.size() == 32);
  bool any_diff = false;
  for (Index s = 0; s < val.size() && !any_diff; ++s)
    any_diff = !matrix_eq(train.inputs[static_cast<std::size_t>(s)],
                          val.inputs[static_cast<std::size_t>(s)]);
  CHECK(any_diff);
}
