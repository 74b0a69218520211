#include "spikerpe/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

namespace spikerpe {

using diff::AttentionSpec;
using diff::AttnBase;
using diff::RowLayout;
using diff::Tape;
using diff::Var;

PEVariant pe_variant_from_string(const std::string& s) {
  if (s == "none") return PEVariant::None;
  if (s == "gray") return PEVariant::Gray;
  if (s == "gray2d") return PEVariant::Gray2D;
  if (s == "log") return PEVariant::Log;
  if (s == "crpe") return PEVariant::CRPE;
  if (s == "dot-baseline") return PEVariant::DotBaseline;
  throw ConfigurationError("unknown pe_variant: " + s);
}

std::string to_string(PEVariant v) {
  switch (v) {
    case PEVariant::None: return "none";
    case PEVariant::Gray: return "gray";
    case PEVariant::Gray2D: return "gray2d";
    case PEVariant::Log: return "log";
    case PEVariant::CRPE: return "crpe";
    case PEVariant::DotBaseline: return "dot-baseline";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (blocks < 1 || d_model < 1 || d_ffn < 1 || time_steps < 1 || seq_len < 1 ||
      feature_dim < 1 || output_dim < 1)
    throw ConfigurationError("model config: all counts must be positive");
  if (pe == PEVariant::Gray && (Index{1} << effective_gray_bits()) < seq_len)
    throw ConfigurationError("model config: gray_bits too small for seq_len");
  if (pe == PEVariant::Gray2D && grid.h * grid.w != seq_len)
    throw ConfigurationError("model config: grid h*w must equal seq_len");
  if (readout_pos >= seq_len)
    throw ConfigurationError("model config: readout_pos must be below seq_len");
}

int ModelConfig::effective_gray_bits() const {
  return gray_bits > 0 ? gray_bits : default_gray_bits(seq_len);
}

double ModelConfig::effective_sigma() const {
  if (sigma > 0.0) return sigma;
  Index d_eff = d_model;
  if (pe == PEVariant::Gray) d_eff += effective_gray_bits();
  if (pe == PEVariant::Gray2D) {
    const int bh = gray_bits_h > 0 ? gray_bits_h : default_gray_bits(grid.h);
    const int bw = gray_bits_w > 0 ? gray_bits_w : default_gray_bits(grid.w);
    d_eff += bh + bw;
  }
  return 1.0 / std::sqrt(static_cast<double>(d_eff));
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

double gaussian(std::mt19937_64& rng) {
  const double u1 = std::max(static_cast<double>(rng() >> 11) * 0x1.0p-53, 1e-300);
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Var init_weight(Index rows, Index cols, std::mt19937_64& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(rows + cols));
  MatrixXd w(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) w(i, j) = std_dev * gaussian(rng);
  return diff::make_var(std::move(w));
}

SpikeTensor to_spike_tensor(const MatrixXd& rows, Index time, Index seq) {
  SpikeTensor s(time, seq, rows.cols());
  for (Index t = 0; t < time; ++t)
    for (Index i = 0; i < seq; ++i)
      for (Index c = 0; c < rows.cols(); ++c)
        s.steps[static_cast<std::size_t>(t)](i, c) =
            rows(t * seq + i, c) > 0.5 ? std::uint8_t{1} : std::uint8_t{0};
  return s;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Index d = config_.d_model;

  switch (config_.pe) {
    case PEVariant::Gray:
      positional_bias_ =
          gray_positional_term(config_.seq_len, config_.effective_gray_bits()).cast<double>();
      break;
    case PEVariant::Gray2D: {
      const int bh = config_.gray_bits_h > 0 ? config_.gray_bits_h
                                             : default_gray_bits(config_.grid.h);
      const int bw = config_.gray_bits_w > 0 ? config_.gray_bits_w
                                             : default_gray_bits(config_.grid.w);
      positional_bias_ = gray_positional_term_2d(config_.grid, bh, bw).cast<double>();
      break;
    }
    case PEVariant::Log:
      positional_bias_ = log_pe_bias(config_.seq_len).r.cast<double>();
      break;
    case PEVariant::CRPE:
      positional_bias_ = complete_rpe_bias(config_.seq_len);
      break;
    default:
      break;
  }

  embed_w_ = init_weight(config_.feature_dim, d, rng);
  embed_bn_ = diff::BatchNormState::init(d);
  for (int blk = 0; blk < config_.blocks; ++blk) {
    Block b;
    b.wq = init_weight(d, d, rng);
    b.wk = init_weight(d, d, rng);
    b.wv = init_weight(d, d, rng);
    b.wo = init_weight(d, d, rng);
    b.w1 = init_weight(d, config_.d_ffn, rng);
    b.w2 = init_weight(config_.d_ffn, d, rng);
    b.bn_q = diff::BatchNormState::init(d);
    b.bn_k = diff::BatchNormState::init(d);
    b.bn_v = diff::BatchNormState::init(d);
    b.bn_o = diff::BatchNormState::init(d);
    b.bn_1 = diff::BatchNormState::init(config_.d_ffn);
    b.bn_2 = diff::BatchNormState::init(d);
    blocks_.push_back(std::move(b));
  }
  head_w_ = init_weight(d, config_.output_dim, rng);
  head_b_ = diff::make_var(MatrixXd::Zero(1, config_.output_dim));
  if (config_.sigma_learnable)
    sigma_var_ = diff::make_var(MatrixXd::Constant(1, 1, config_.effective_sigma()));
}

Var Model::forward(Tape& tape, const std::vector<MatrixXd>& inputs, bool training,
                   SpikeTensor* probe_q, SpikeTensor* probe_k) {
  const Index batch = static_cast<Index>(inputs.size());
  const Index l = config_.seq_len;
  const Index t_steps = config_.time_steps;
  MatrixXd in_rows(batch * l, config_.feature_dim);
  for (Index bi = 0; bi < batch; ++bi) {
    if (inputs[static_cast<std::size_t>(bi)].rows() != l ||
        inputs[static_cast<std::size_t>(bi)].cols() != config_.feature_dim)
      throw ConfigurationError("forward: input shape does not match config");
    in_rows.middleRows(bi * l, l) = inputs[static_cast<std::size_t>(bi)];
  }
  const RowLayout layout{batch, t_steps, l};

  Var x = diff::make_var(std::move(in_rows), /*requires_grad=*/false);
  x = diff::linear(tape, x, embed_w_);
  x = diff::repeat_time(tape, x, batch, l, t_steps);
  // Normalization always uses the batch statistics: at desk scale the running
  // averages of an untrained model are meaningless and would silence every
  // neuron. Evaluation only skips the running-average update.
  x = diff::batch_norm(tape, x, embed_bn_, /*training=*/true, /*update_running=*/training);
  x = diff::spike_layer(tape, x, layout, config_.lif, config_.surrogate_alpha);

  AttentionSpec spec;
  spec.layout = layout;
  spec.base = config_.pe == PEVariant::DotBaseline ? AttnBase::Dot : AttnBase::Xnor;
  spec.bias = positional_bias_;
  spec.sigma = config_.effective_sigma();
  spec.sigma_var = sigma_var_;

  for (std::size_t blk = 0; blk < blocks_.size(); ++blk) {
    Block& b = blocks_[blk];
    Var q = diff::spike_layer(tape, diff::batch_norm(tape, diff::linear(tape, x, b.wq), b.bn_q, /*training=*/true, /*update_running=*/training),
                              layout, config_.lif, config_.surrogate_alpha);
    Var k = diff::spike_layer(tape, diff::batch_norm(tape, diff::linear(tape, x, b.wk), b.bn_k, /*training=*/true, /*update_running=*/training),
                              layout, config_.lif, config_.surrogate_alpha);
    Var v = diff::spike_layer(tape, diff::batch_norm(tape, diff::linear(tape, x, b.wv), b.bn_v, /*training=*/true, /*update_running=*/training),
                              layout, config_.lif, config_.surrogate_alpha);
    if (blk == 0 && probe_q) *probe_q = to_spike_tensor(q->value.topRows(t_steps * l), t_steps, l);
    if (blk == 0 && probe_k) *probe_k = to_spike_tensor(k->value.topRows(t_steps * l), t_steps, l);
    Var attn = diff::spiking_attention(tape, q, k, v, spec);
    Var o_current = diff::batch_norm(tape, diff::linear(tape, attn, b.wo), b.bn_o, /*training=*/true, /*update_running=*/training);
    // Residuals join as membrane current ahead of the spiking nonlinearity.
    Var o = diff::spike_layer(tape, diff::add(tape, o_current, x), layout, config_.lif,
                              config_.surrogate_alpha);
    Var f1 = diff::spike_layer(tape, diff::batch_norm(tape, diff::linear(tape, o, b.w1), b.bn_1, /*training=*/true, /*update_running=*/training),
                               layout, config_.lif, config_.surrogate_alpha);
    Var f2_current = diff::batch_norm(tape, diff::linear(tape, f1, b.w2), b.bn_2, /*training=*/true, /*update_running=*/training);
    x = diff::spike_layer(tape, diff::add(tape, f2_current, o), layout, config_.lif,
                          config_.surrogate_alpha);
  }

  Var pooled = diff::mean_over_time(tape, x, layout);
  Var last = diff::select_position(tape, pooled, batch, l, config_.effective_readout_pos());
  return diff::add_bias(tape, diff::linear(tape, last, head_w_), head_b_);
}

MatrixXd Model::predict(const std::vector<MatrixXd>& inputs) {
  Tape tape;
  Var out = forward(tape, inputs, /*training=*/false);
  return out->value;
}

void Model::probe_first_block(const MatrixXd& input, SpikeTensor& q_out, SpikeTensor& k_out) {
  Tape tape;
  forward(tape, {input}, /*training=*/false, &q_out, &k_out);
}

std::vector<std::pair<std::string, Var>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Var>> params;
  params.emplace_back("embed.w", embed_w_);
  params.emplace_back("embed.bn.gamma", embed_bn_.gamma);
  params.emplace_back("embed.bn.beta", embed_bn_.beta);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto p = "block" + std::to_string(i) + ".";
    const Block& b = blocks_[i];
    params.emplace_back(p + "wq", b.wq);
    params.emplace_back(p + "wk", b.wk);
    params.emplace_back(p + "wv", b.wv);
    params.emplace_back(p + "wo", b.wo);
    params.emplace_back(p + "w1", b.w1);
    params.emplace_back(p + "w2", b.w2);
    const std::pair<const char*, const diff::BatchNormState*> bns[] = {
        {"bn_q", &b.bn_q}, {"bn_k", &b.bn_k}, {"bn_v", &b.bn_v},
        {"bn_o", &b.bn_o}, {"bn_1", &b.bn_1}, {"bn_2", &b.bn_2}};
    for (const auto& [suffix, bn] : bns) {
      params.emplace_back(p + suffix + ".gamma", bn->gamma);
      params.emplace_back(p + suffix + ".beta", bn->beta);
    }
  }
  params.emplace_back("head.w", head_w_);
  params.emplace_back("head.b", head_b_);
  if (sigma_var_) params.emplace_back("sigma", sigma_var_);
  return params;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : named_parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

MetricReport Model::evaluate(const Dataset& ds, Index batch_size) {
  MetricReport report;
  MatrixXd preds(ds.size(), config_.output_dim);
  for (Index start = 0; start < ds.size(); start += batch_size) {
    const Index n = std::min(batch_size, ds.size() - start);
    std::vector<MatrixXd> batch(ds.inputs.begin() + start, ds.inputs.begin() + start + n);
    preds.middleRows(start, n) = predict(batch);
  }
  if (ds.classification) {
    Index correct = 0;
    double loss = 0.0;
    for (Index i = 0; i < ds.size(); ++i) {
      Index arg = 0;
      preds.row(i).maxCoeff(&arg);
      if (static_cast<int>(arg) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
      const double mx = preds.row(i).maxCoeff();
      const double lse = std::log((preds.row(i).array() - mx).exp().sum()) + mx;
      loss += lse - preds(i, ds.labels[static_cast<std::size_t>(i)]);
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    report.loss = loss / static_cast<double>(ds.size());
  } else {
    MatrixXd targets(ds.size(), ds.target_dim);
    for (Index i = 0; i < ds.size(); ++i)
      targets.row(i) = ds.targets[static_cast<std::size_t>(i)].transpose();
    report.loss = (preds - targets).squaredNorm() / static_cast<double>(targets.size());
    int skipped = 0;
    report.r2 = metric_r2(preds, targets, &skipped);
    report.rse = metric_rse(preds, targets);
    report.skipped_channels = skipped;
  }
  return report;
}

std::vector<EpochMetrics> Model::train(const Dataset& train_set, const Dataset& val_set,
                                       const TrainConfig& tc) {
  auto params = named_parameters();
  std::vector<MatrixXd> adam_m, adam_v;
  for (const auto& [name, p] : params) {
    adam_m.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
    adam_v.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::int64_t step = 0;

  std::mt19937_64 rng(tc.seed);
  std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
  for (Index i = 0; i < train_set.size(); ++i) order[static_cast<std::size_t>(i)] = i;

  std::vector<EpochMetrics> history;
  {
    EpochMetrics initial;
    initial.epoch = 0;
    initial.validation = evaluate(val_set);
    history.push_back(initial);
  }

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    // Fisher-Yates with the run's own stream; keeps shuffles reproducible.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

    const double lr = 0.5 * tc.lr *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) /
                                      static_cast<double>(tc.epochs)));
    double loss_sum = 0.0;
    Index batches = 0;
    for (Index start = 0; start < train_set.size(); start += tc.batch_size) {
      const Index n = std::min(tc.batch_size, train_set.size() - start);
      std::vector<MatrixXd> batch;
      std::vector<int> labels;
      MatrixXd targets(n, train_set.target_dim);
      for (Index i = 0; i < n; ++i) {
        const Index idx = order[static_cast<std::size_t>(start + i)];
        batch.push_back(train_set.inputs[static_cast<std::size_t>(idx)]);
        if (train_set.classification)
          labels.push_back(train_set.labels[static_cast<std::size_t>(idx)]);
        else
          targets.row(i) = train_set.targets[static_cast<std::size_t>(idx)].transpose();
      }

      for (auto& [name, p] : params) p->grad.setZero();
      Tape tape;
      Var out = forward(tape, batch, /*training=*/true);
      Var loss = train_set.classification ? diff::softmax_cross_entropy(tape, out, labels)
                                          : diff::mse_loss(tape, out, targets);
      const double loss_value = loss->value(0, 0);
      if (!std::isfinite(loss_value))
        throw TrainingError(epoch, "training diverged at epoch " + std::to_string(epoch));
      tape.backward(loss);
      loss_sum += loss_value;
      ++batches;

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi].second;
        adam_m[pi] = beta1 * adam_m[pi] + (1.0 - beta1) * p->grad;
        adam_v[pi] = (beta2 * adam_v[pi].array() + (1.0 - beta2) * p->grad.array().square()).matrix();
        p->value -= (lr * (adam_m[pi].array() / bc1) /
                     ((adam_v[pi].array() / bc2).sqrt() + adam_eps))
                        .matrix();
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(std::max<Index>(batches, 1));
    em.validation = evaluate(val_set);
    history.push_back(em);
    if (tc.stop_at_accuracy >= 0.0 && val_set.classification &&
        em.validation.accuracy.value_or(-1.0) >= tc.stop_at_accuracy)
      break;
  }
  return history;
}

namespace {
constexpr char kWeightsMagic[4] = {'S', 'P', 'K', 'R'};
constexpr std::uint32_t kWeightsVersion = 1;
}  // namespace

void Model::save_weights(const std::string& path, std::uint64_t config_digest) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigurationError("save_weights: cannot open " + path);
  out.write(kWeightsMagic, 4);
  out.write(reinterpret_cast<const char*>(&kWeightsVersion), sizeof kWeightsVersion);
  out.write(reinterpret_cast<const char*>(&config_digest), sizeof config_digest);
  auto params = named_parameters();
  const auto count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [name, p] : params) {
    const auto len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(name.data(), len);
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(p->value.rows()),
                                   static_cast<std::uint64_t>(p->value.cols())};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    for (Index r = 0; r < p->value.rows(); ++r)
      for (Index c = 0; c < p->value.cols(); ++c) {
        const double f = p->value(r, c);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
      }
  }
}

void Model::load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigurationError("load_weights: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw ConfigurationError("load_weights: bad magic");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kWeightsVersion) throw ConfigurationError("load_weights: unsupported version");
  std::uint64_t digest = 0;
  in.read(reinterpret_cast<char*>(&digest), sizeof digest);
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  auto params = named_parameters();
  if (count != params.size()) throw ConfigurationError("load_weights: parameter count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint64_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    auto it = std::find_if(params.begin(), params.end(),
                           [&name](const auto& np) { return np.first == name; });
    if (it == params.end()) throw ConfigurationError("load_weights: unknown tensor " + name);
    auto& p = it->second;
    if (static_cast<std::uint64_t>(p->value.rows()) != dims[0] ||
        static_cast<std::uint64_t>(p->value.cols()) != dims[1])
      throw ConfigurationError("load_weights: shape mismatch for " + name);
    for (std::uint64_t r = 0; r < dims[0]; ++r)
      for (std::uint64_t c = 0; c < dims[1]; ++c) {
        double f = 0;
        in.read(reinterpret_cast<char*>(&f), sizeof f);
        p->value(static_cast<Index>(r), static_cast<Index>(c)) = f;
      }
  }
  if (!in) throw ConfigurationError("load_weights: truncated file");
}

}  // namespace spikerpe
