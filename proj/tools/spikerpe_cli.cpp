#include "spikerpe/attention.hpp"
#include "spikerpe/bitcodec.hpp"
#include "spikerpe/config.hpp"
#include "spikerpe/lut.hpp"
#include "spikerpe/model.hpp"
#include "spikerpe/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using namespace spikerpe;

constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitDiverged = 3;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::filesystem::path run_dir(const ExperimentConfig& cfg) {
  std::filesystem::path root = cfg.output_dir;
  if (const char* env = std::getenv("SPIKERPE_OUT_ROOT")) root = env;
  return root / hex64(cfg.digest());
}

nlohmann::json epoch_json(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch}, {"train_loss", m.train_loss},
                      {"val_loss", m.validation.loss}};
  if (m.validation.accuracy) j["accuracy"] = *m.validation.accuracy;
  if (m.validation.r2) j["r2"] = *m.validation.r2;
  if (m.validation.rse) j["rse"] = *m.validation.rse;
  if (m.validation.skipped_channels) j["skipped_channels"] = m.validation.skipped_channels;
  return j;
}

int cmd_verify(const std::string& scope, const std::string& out_path) {
  const auto results = verify_scope(scope);
  const std::string report = results_to_json(results);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << report << "\n";
  }
  bool ok = true;
  for (const auto& r : results) {
    std::cerr << (r.passed ? "  pass  " : "  FAIL  ") << r.name << ": " << r.details << "\n";
    ok = ok && r.passed;
  }
  std::cout << report << "\n";
  return ok ? 0 : kExitVerifyFailed;
}

int cmd_train(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const Dataset train_set = make_train_dataset(cfg.task, cfg.train.seed);
  const Dataset val_set = make_val_dataset(cfg.task, cfg.train.seed);

  const auto dir = run_dir(cfg);
  std::filesystem::create_directories(dir);

  Model model(cfg.model, cfg.train.seed);
  std::vector<EpochMetrics> history;
  try {
    history = model.train(train_set, val_set, cfg.train);
  } catch (const TrainingError& e) {
    std::cerr << "training diverged at epoch " << e.epoch << ": " << e.what() << "\n";
    return kExitDiverged;
  }

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  for (const auto& m : history) metrics << epoch_json(m).dump() << "\n";
  model.save_weights((dir / "weights.bin").string(), cfg.digest());

  std::cout << history.back().validation.to_json() << "\n";
  std::cerr << "artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_compare(const std::string& config_path, const std::vector<std::string>& variants,
                std::vector<std::uint64_t> seeds) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (variants.empty()) throw ConfigurationError("compare: need at least one variant");
  if (seeds.empty()) seeds.push_back(cfg.train.seed);

  std::cout << "variant,seed,r2,rse,accuracy\n";
  for (const auto& name : variants) {
    ModelConfig mc = cfg.model;
    mc.pe = pe_variant_from_string(name);
    mc.validate();
    double sum_r2 = 0, sum_rse = 0, sum_acc = 0;
    int finished = 0;
    for (const auto seed : seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const Dataset train_set = make_train_dataset(cfg.task, seed);
      const Dataset val_set = make_val_dataset(cfg.task, seed);
      Model model(mc, seed);
      MetricReport rep;
      bool diverged = false;
      try {
        const auto history = model.train(train_set, val_set, tc);
        rep = history.back().validation;
      } catch (const TrainingError& e) {
        diverged = true;
        std::cerr << name << " seed " << seed << " diverged at epoch " << e.epoch << "\n";
      }
      std::cout << name << "," << seed << ",";
      if (diverged) {
        std::cout << "nan,nan,nan\n";
        continue;
      }
      std::cout << (rep.r2 ? std::to_string(*rep.r2) : "") << ","
                << (rep.rse ? std::to_string(*rep.rse) : "") << ","
                << (rep.accuracy ? std::to_string(*rep.accuracy) : "") << "\n";
      sum_r2 += rep.r2.value_or(0);
      sum_rse += rep.rse.value_or(0);
      sum_acc += rep.accuracy.value_or(0);
      ++finished;
    }
    if (finished > 0) {
      const bool cls = cfg.model.classification;
      std::cout << name << ",mean," << (cls ? "" : std::to_string(sum_r2 / finished)) << ","
                << (cls ? "" : std::to_string(sum_rse / finished)) << ","
                << (cls ? std::to_string(sum_acc / finished) : "") << "\n";
    } else {
      std::cout << name << ",mean,nan,nan,nan\n";
    }
  }
  return 0;
}

int cmd_bench(const std::vector<Index>& sizes, Index dim, int reps) {
  std::mt19937_64 rng(1);
  std::cout << "op,L,D,us_per_map\n";
  for (const Index l : sizes) {
    SpikeTensor q(4, l, dim), k(4, l, dim);
    for (auto* t : {&q, &k})
      for (auto& m : t->steps)
        for (Index i = 0; i < l; ++i)
          for (Index j = 0; j < dim; ++j) m(i, j) = rng() & 1u;
    const int b = default_gray_bits(l);
    const RelativeBias bias = log_pe_bias(l);

    const auto time_op = [&](const char* name, auto&& fn) {
      long long sink = 0;
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < reps; ++r) {
        const AttnMap m = fn();
        sink += m.scores[0](0, 0);
      }
      asm volatile("" : : "r"(sink));
      const auto t1 = std::chrono::steady_clock::now();
      const double us =
          std::chrono::duration<double, std::micro>(t1 - t0).count() / reps;
      std::cout << name << "," << l << "," << dim << "," << us << "\n";
      (void)sink;
    };
    time_op("dot", [&] { return ssa_dot_map(q, k); });
    time_op("xnor", [&] { return xnor_map(q, k); });
    time_op("gray", [&] { return gray_pe_map(q, k, b); });
    time_op("log", [&] { return log_pe_map(q, k, bias); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikerpe: relative positional encoding for spiking attention"};
  app.require_subcommand(1);

  auto* verify = app.add_subcommand("verify", "run property suites");
  std::string scope = "all";
  std::string verify_out;
  verify->add_option("scope", scope, "all|theorem1|attention|gradients|lut|metrics");
  verify->add_option("--out", verify_out, "also write the JSON report here");

  auto* dump = app.add_subcommand("dump-pe", "emit positional encodings as CSV");
  dump->require_subcommand(1);
  Index dump_len = 16;
  int dump_bits = 0;
  auto* dump_gray = dump->add_subcommand("gray", "index,gray_bits rows");
  dump_gray->add_option("--length", dump_len)->required();
  dump_gray->add_option("--bits", dump_bits);
  auto* dump_log = dump->add_subcommand("log", "L x L bias matrix");
  dump_log->add_option("--length", dump_len)->required();
  auto* dump_term = dump->add_subcommand("gray-term", "L x L positional-term matrix");
  dump_term->add_option("--length", dump_len)->required();
  dump_term->add_option("--bits", dump_bits);

  auto* train = app.add_subcommand("train", "train one model from a config file");
  std::string config_path;
  train->add_option("config", config_path, "experiment config (JSON)")->required();

  auto* compare = app.add_subcommand("compare", "train several PE variants and tabulate");
  std::string cmp_config;
  std::vector<std::string> cmp_variants;
  std::vector<std::uint64_t> cmp_seeds;
  compare->add_option("config", cmp_config)->required();
  compare->add_option("--variants", cmp_variants, "none,gray,gray2d,log,crpe,dot-baseline")
      ->required()
      ->delimiter(',');
  compare->add_option("--seeds", cmp_seeds)->delimiter(',');

  auto* bench = app.add_subcommand("bench", "time attention-map construction");
  std::vector<Index> bench_sizes = {16, 64, 256};
  Index bench_dim = 32;
  int bench_reps = 50;
  bench->add_option("--sizes", bench_sizes)->delimiter(',');
  bench->add_option("--dim", bench_dim);
  bench->add_option("--reps", bench_reps);

  auto* lut = app.add_subcommand("lut", "fixed-point log2 table tools");
  lut->require_subcommand(1);
  int lut_n = 9, lut_k = 64, lut_p = 16;
  std::string lut_out;
  Index lut_len_max = 512;
  auto* lut_build = lut->add_subcommand("build", "fit and write a table");
  lut_build->add_option("--n", lut_n)->required();
  lut_build->add_option("--k", lut_k)->required();
  lut_build->add_option("--p", lut_p)->required();
  lut_build->add_option("--out", lut_out)->required();
  auto* lut_check = lut->add_subcommand("check", "bias equality scan against the exact path");
  lut_check->add_option("--length-max", lut_len_max);
  lut_check->add_option("--n", lut_n);
  lut_check->add_option("--k", lut_k);
  lut_check->add_option("--p", lut_p);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return cmd_verify(scope, verify_out);

    if (*dump_gray) {
      const int b = dump_bits > 0 ? dump_bits : default_gray_bits(dump_len);
      std::cout << "index,gray_bits\n";
      for (Index i = 0; i < dump_len; ++i)
        std::cout << i << "," << to_bit_string(gray_encode(static_cast<std::uint64_t>(i), b))
                  << "\n";
      return 0;
    }
    if (*dump_log) {
      const RelativeBias bias = log_pe_bias(dump_len);
      for (Index i = 0; i < dump_len; ++i) {
        for (Index j = 0; j < dump_len; ++j) std::cout << (j ? "," : "") << bias.r(i, j);
        std::cout << "\n";
      }
      return 0;
    }
    if (*dump_term) {
      const int b = dump_bits > 0 ? dump_bits : default_gray_bits(dump_len);
      const MatrixXi term = gray_positional_term(dump_len, b);
      for (Index i = 0; i < dump_len; ++i) {
        for (Index j = 0; j < dump_len; ++j) std::cout << (j ? "," : "") << term(i, j);
        std::cout << "\n";
      }
      return 0;
    }

    if (*train) return cmd_train(config_path);
    if (*compare) return cmd_compare(cmp_config, cmp_variants, cmp_seeds);
    if (*bench) return cmd_bench(bench_sizes, bench_dim, bench_reps);

    if (*lut_build) {
      const Log2LUT table = build_log2_lut(lut_n, lut_k, lut_p);
      save_lut(table, lut_out);
      std::cout << "{\"n\":" << table.n_bits << ",\"k\":" << table.k_segments << ",\"p\":"
                << table.p_bits << ",\"storage_bits\":" << table.storage_bits()
                << ",\"max_abs_error\":" << table.max_abs_error
                << ",\"ceil_exact\":" << (table.ceil_exact ? "true" : "false") << "}\n";
      return 0;
    }
    if (*lut_check) {
      const Log2LUT table = build_log2_lut(lut_n, lut_k, lut_p);
      Index mismatched = 0;
      for (Index l = 2; l <= lut_len_max; ++l)
        if (lut_log_pe_bias(l, table).r != log_pe_bias(l).r) ++mismatched;
      std::cout << "{\"n\":" << lut_n << ",\"k\":" << lut_k << ",\"p\":" << lut_p
                << ",\"length_max\":" << lut_len_max << ",\"mismatched_lengths\":" << mismatched
                << "}\n";
      return mismatched == 0 ? 0 : kExitVerifyFailed;
    }
  } catch (const ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return 0;
}
