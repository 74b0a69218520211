#pragma once

#include "spikerpe/neuron.hpp"
#include "spikerpe/types.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace spikerpe::diff {

using spikerpe::Index;
using spikerpe::MatrixXd;
using spikerpe::VectorXd;

// A tensor with an accumulated-gradient companion. Values are stored 2D with
// all leading axes flattened into rows and the channel axis in columns; ops
// that need the [batch, T, L] row structure take it explicitly.
struct VarNode {
  MatrixXd value;
  MatrixXd grad;
  bool requires_grad = true;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = MatrixXd::Zero(value.rows(), value.cols());
  }
};

using Var = std::shared_ptr<VarNode>;

Var make_var(MatrixXd value, bool requires_grad = true);

// Reverse-mode tape. Ops push their backward closure in execution order;
// backward() replays them in reverse, which is a valid topological order.
class Tape {
 public:
  void record(std::function<void()> op) { ops_.push_back(std::move(op)); }

  void backward(const Var& scalar_out);

  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// Row layout descriptor: rows are (batch-major, time, position).
struct RowLayout {
  Index batch = 1;
  Index time = 1;
  Index seq = 1;

  Index rows() const { return batch * time * seq; }
};

// y = x * w over the channel axis.
Var linear(Tape& tape, const Var& x, const Var& w);

Var add(Tape& tape, const Var& x, const Var& y);

Var scale(Tape& tape, const Var& x, double c);

// Broadcasts a 1 x C bias over all rows.
Var add_bias(Tape& tape, const Var& x, const Var& bias);

struct BatchNormState {
  Var gamma;  // 1 x C
  Var beta;   // 1 x C
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormState init(Index channels);
};

// Per-channel normalization over all rows (batch x T x L jointly). In
// training mode the batch statistics are used and folded into the running
// averages; update_running=false keeps batch statistics without touching
// them (deterministic evaluation on small models).
Var batch_norm(Tape& tape, const Var& x, BatchNormState& state, bool training,
               bool update_running = true);

// LIF unrolled over layout.time steps. Forward output is strictly binary;
// backward substitutes the arctangent surrogate for the Heaviside step and
// propagates through the membrane recurrence (BPTT).
Var spike_layer(Tape& tape, const Var& x, const RowLayout& layout, const LIFParams& params,
                double surrogate_alpha);

// Repeats rows (b, l) to (b, t, l); backward sums over time.
Var repeat_time(Tape& tape, const Var& x, Index batch, Index seq, Index time);

// Mean over the time axis: rows (b, t, l) -> (b, l).
Var mean_over_time(Tape& tape, const Var& x, const RowLayout& layout);

// Picks one sequence position: rows (b, l) -> (b).
Var select_position(Tape& tape, const Var& x, Index batch, Index seq, Index pos);

enum class AttnBase { Dot, Xnor };

// Fused spiking attention: per (batch, time) slice,
//   S = Q K^T                      (Dot)
//   S = Q K^T + (J - Q)(J - K)^T   (Xnor; counts agreeing bits)
// plus an optional constant L x L bias (positional term), then O = sigma S V.
// Q and K are expected to be binary-valued; the op itself only assumes real.
struct AttentionSpec {
  RowLayout layout;
  AttnBase base = AttnBase::Xnor;
  MatrixXd bias;       // L x L additive constant; empty for none
  double sigma = 1.0;  // used when sigma_var is null
  Var sigma_var;       // optional learnable 1x1 scale
};

Var spiking_attention(Tape& tape, const Var& q, const Var& k, const Var& v,
                      const AttentionSpec& spec);

// Mean softmax cross-entropy against integer labels; returns a 1x1 Var.
Var softmax_cross_entropy(Tape& tape, const Var& logits, const std::vector<int>& labels);

// Mean squared error; returns a 1x1 Var.
Var mse_loss(Tape& tape, const Var& pred, const MatrixXd& target);

// Central finite differences vs accumulated gradients over every parameter
// entry; returns the max relative error. The callable must rebuild the
// forward graph on the provided tape and return a 1x1 scalar Var.
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<MatrixXd>& init_params, double eps);

}  // namespace spikerpe::diff
