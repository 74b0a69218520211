#include "spikerpe/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace spikerpe {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& section) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key))
      throw ConfigurationError("config: unknown key '" + key + "' in " + section);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("config: parse error: ") + e.what());
  }
  reject_unknown(root, {"model", "neuron", "task", "train", "output_dir"}, "top level");

  ExperimentConfig cfg;

  const json task = root.value("task", json::object());
  reject_unknown(task,
                 {"name", "L", "vocab", "k", "n_train", "n_val", "channels", "horizon",
                  "noise_std"},
                 "task");
  cfg.task.name = task.value("name", cfg.task.name);
  cfg.task.seq_len = task.value("L", cfg.task.seq_len);
  cfg.task.vocab = task.value("vocab", cfg.task.vocab);
  cfg.task.offset_k = task.value("k", cfg.task.offset_k);
  cfg.task.n_train = task.value("n_train", cfg.task.n_train);
  cfg.task.n_val = task.value("n_val", cfg.task.n_val);
  cfg.task.channels = task.value("channels", cfg.task.channels);
  cfg.task.horizon = task.value("horizon", cfg.task.horizon);
  cfg.task.noise_std = task.value("noise_std", cfg.task.noise_std);
  if (cfg.task.name != "offset-copy" && cfg.task.name != "sinusoid")
    throw ConfigurationError("config: unknown task '" + cfg.task.name + "'");

  const json model = root.value("model", json::object());
  reject_unknown(model,
                 {"blocks", "d_model", "d_ffn", "T", "pe_variant", "gray_bits", "gray_bits_h",
                  "gray_bits_w", "grid_h", "grid_w", "sigma", "readout_pos"},
                 "model");
  cfg.model.blocks = model.value("blocks", cfg.model.blocks);
  cfg.model.d_model = model.value("d_model", cfg.model.d_model);
  cfg.model.d_ffn = model.value("d_ffn", cfg.model.d_ffn);
  cfg.model.time_steps = model.value("T", cfg.model.time_steps);
  cfg.model.pe = pe_variant_from_string(model.value("pe_variant", std::string("none")));
  cfg.model.gray_bits = model.value("gray_bits", 0);
  cfg.model.gray_bits_h = model.value("gray_bits_h", 0);
  cfg.model.gray_bits_w = model.value("gray_bits_w", 0);
  cfg.model.grid.h = model.value("grid_h", Index{1});
  cfg.model.grid.w = model.value("grid_w", cfg.task.seq_len);
  cfg.model.readout_pos = model.value("readout_pos", cfg.model.readout_pos);
  if (model.contains("sigma")) {
    if (model["sigma"].is_string()) {
      if (model["sigma"].get<std::string>() != "learnable")
        throw ConfigurationError("config: sigma must be a number or \"learnable\"");
      cfg.model.sigma_learnable = true;
    } else {
      cfg.model.sigma = model["sigma"].get<double>();
      if (cfg.model.sigma <= 0) throw ConfigurationError("config: sigma must be positive");
    }
  }

  const json neuron = root.value("neuron", json::object());
  reject_unknown(neuron, {"tau", "u_thr", "u_reset", "surrogate_alpha"}, "neuron");
  cfg.model.lif.tau = neuron.value("tau", cfg.model.lif.tau);
  cfg.model.lif.u_thr = neuron.value("u_thr", cfg.model.lif.u_thr);
  cfg.model.lif.u_reset = neuron.value("u_reset", cfg.model.lif.u_reset);
  cfg.model.surrogate_alpha = neuron.value("surrogate_alpha", cfg.model.surrogate_alpha);
  if (cfg.model.lif.tau <= 0 || cfg.model.lif.u_thr <= cfg.model.lif.u_reset)
    throw ConfigurationError("config: neuron parameters violate tau > 0, u_thr > u_reset");

  if (!root.contains("train") || !root["train"].contains("seed"))
    throw ConfigurationError("config: train.seed is mandatory");
  const json train = root["train"];
  reject_unknown(train, {"epochs", "lr", "batch_size", "seed"}, "train");
  cfg.train.epochs = train.value("epochs", cfg.train.epochs);
  cfg.train.lr = train.value("lr", cfg.train.lr);
  cfg.train.batch_size = train.value("batch_size", cfg.train.batch_size);
  cfg.train.seed = train["seed"].get<std::uint64_t>();
  if (cfg.train.epochs < 0 || cfg.train.lr <= 0 || cfg.train.batch_size < 1)
    throw ConfigurationError("config: invalid train section");

  cfg.output_dir = root.value("output_dir", cfg.output_dir);

  // Model geometry follows the task.
  cfg.model.seq_len = cfg.task.seq_len;
  if (cfg.task.name == "offset-copy") {
    cfg.model.feature_dim = cfg.task.vocab;
    cfg.model.output_dim = cfg.task.vocab;
    cfg.model.classification = true;
  } else {
    cfg.model.feature_dim = cfg.task.channels;
    cfg.model.output_dim = cfg.task.horizon * cfg.task.channels;
    cfg.model.classification = false;
  }
  cfg.model.validate();

  cfg.canonical = root.dump();  // nlohmann orders keys; stable canonical form
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

Dataset make_train_dataset(const TaskSpec& task, std::uint64_t seed) {
  const std::uint64_t stream = seed * 2 + 1;
  if (task.name == "offset-copy")
    return gen_offset_copy(task.seq_len, task.vocab, task.offset_k, task.n_train, stream);
  return gen_sinusoid_forecast(task.seq_len, task.horizon, task.channels, task.n_train,
                               task.noise_std, stream);
}

Dataset make_val_dataset(const TaskSpec& task, std::uint64_t seed) {
  const std::uint64_t stream = seed * 2 + 0x9e3779b97f4a7c15ull;
  if (task.name == "offset-copy")
    return gen_offset_copy(task.seq_len, task.vocab, task.offset_k, task.n_val, stream);
  return gen_sinusoid_forecast(task.seq_len, task.horizon, task.channels, task.n_val,
                               task.noise_std, stream);
}

}  // namespace spikerpe
