#include "spikerpe/autodiff.hpp"

#include <cmath>

namespace spikerpe::diff {

Var make_var(MatrixXd value, bool requires_grad) {
  auto node = std::make_shared<VarNode>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->ensure_grad();
  return node;
}

void Tape::backward(const Var& scalar_out) {
  if (scalar_out->value.size() != 1)
    throw DimensionError("Tape::backward: output must be scalar");
  scalar_out->ensure_grad();
  scalar_out->grad(0, 0) += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Var linear(Tape& tape, const Var& x, const Var& w) {
  if (x->value.cols() != w->value.rows())
    throw DimensionError("linear: inner dimensions disagree");
  Var out = make_var(x->value * w->value);
  tape.record([x, w, out]() {
    if (x->requires_grad) x->grad.noalias() += out->grad * w->value.transpose();
    if (w->requires_grad) w->grad.noalias() += x->value.transpose() * out->grad;
  });
  return out;
}

Var add(Tape& tape, const Var& x, const Var& y) {
  if (x->value.rows() != y->value.rows() || x->value.cols() != y->value.cols())
    throw DimensionError("add: shape mismatch");
  Var out = make_var(x->value + y->value);
  tape.record([x, y, out]() {
    if (x->requires_grad) x->grad += out->grad;
    if (y->requires_grad) y->grad += out->grad;
  });
  return out;
}

Var scale(Tape& tape, const Var& x, double c) {
  Var out = make_var(x->value * c);
  tape.record([x, c, out]() {
    if (x->requires_grad) x->grad += out->grad * c;
  });
  return out;
}

Var add_bias(Tape& tape, const Var& x, const Var& bias) {
  if (bias->value.rows() != 1 || bias->value.cols() != x->value.cols())
    throw DimensionError("add_bias: bias must be 1 x C");
  Var out = make_var(x->value.rowwise() + bias->value.row(0));
  tape.record([x, bias, out]() {
    if (x->requires_grad) x->grad += out->grad;
    if (bias->requires_grad) bias->grad.row(0) += out->grad.colwise().sum();
  });
  return out;
}

BatchNormState BatchNormState::init(Index channels) {
  BatchNormState s;
  s.gamma = make_var(MatrixXd::Ones(1, channels));
  s.beta = make_var(MatrixXd::Zero(1, channels));
  s.running_mean = Eigen::RowVectorXd::Zero(channels);
  s.running_var = Eigen::RowVectorXd::Ones(channels);
  return s;
}

Var batch_norm(Tape& tape, const Var& x, BatchNormState& state, bool training,
               bool update_running) {
  const Index rows = x->value.rows();
  const Index cols = x->value.cols();
  if (cols != state.gamma->value.cols()) throw DimensionError("batch_norm: channel mismatch");
  if (rows == 0) throw NumericError("batch_norm: zero batch");

  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd var;
  if (training) {
    mean = x->value.colwise().mean();
    var = (x->value.rowwise() - mean).array().square().colwise().mean();
    if (update_running) {
      state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
      state.running_var = (1.0 - state.momentum) * state.running_var + state.momentum * var;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  const Eigen::RowVectorXd inv_std = (var.array() + state.epsilon).rsqrt();
  auto xhat = std::make_shared<MatrixXd>(
      ((x->value.rowwise() - mean).array().rowwise() * inv_std.array()).matrix());
  Var out = make_var(
      (((xhat->array().rowwise() * state.gamma->value.row(0).array()).rowwise() +
        state.beta->value.row(0).array())
           .matrix()));

  Var gamma = state.gamma;
  Var beta = state.beta;
  tape.record([x, out, xhat, gamma, beta, inv_std, rows, training]() {
    const MatrixXd& g = out->grad;
    if (gamma->requires_grad)
      gamma->grad.row(0) += (g.array() * xhat->array()).colwise().sum().matrix();
    if (beta->requires_grad) beta->grad.row(0) += g.colwise().sum();
    if (!x->requires_grad) return;
    const MatrixXd dxhat = (g.array().rowwise() * gamma->value.row(0).array()).matrix();
    if (training) {
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat->array()).colwise().sum();
      const double n = static_cast<double>(rows);
      MatrixXd dx = (n * dxhat).rowwise() - sum_dxhat;
      dx -= (xhat->array().rowwise() * sum_dxhat_xhat.array()).matrix();
      dx = ((dx.array().rowwise() * inv_std.array()) / n).matrix();
      x->grad += dx;
    } else {
      x->grad += (dxhat.array().rowwise() * inv_std.array()).matrix();
    }
  });
  return out;
}

Var spike_layer(Tape& tape, const Var& x, const RowLayout& layout, const LIFParams& params,
                double surrogate_alpha) {
  if (x->value.rows() != layout.rows()) throw DimensionError("spike_layer: row layout mismatch");
  const Index b = layout.batch;
  const Index t_steps = layout.time;
  const Index l = layout.seq;
  const Index d = x->value.cols();
  const Index step_rows = b * l;

  auto h_all = std::make_shared<MatrixXd>(MatrixXd::Zero(x->value.rows(), d));
  MatrixXd spikes = MatrixXd::Zero(x->value.rows(), d);
  MatrixXd u = MatrixXd::Constant(step_rows, d, params.u_reset);

  for (Index t = 0; t < t_steps; ++t) {
    for (Index bi = 0; bi < b; ++bi) {
      const Index src = (bi * t_steps + t) * l;
      const Index dst = bi * l;
      auto i_blk = x->value.middleRows(src, l);
      auto u_blk = u.middleRows(dst, l);
      MatrixXd h = u_blk + (i_blk - (u_blk.array() - params.u_reset).matrix()) / params.tau;
      h_all->middleRows(src, l) = h;
      for (Index r = 0; r < l; ++r)
        for (Index c = 0; c < d; ++c) {
          if (h(r, c) >= params.u_thr) {
            spikes(src + r, c) = 1.0;
            u_blk(r, c) = params.u_reset;
          } else {
            u_blk(r, c) = h(r, c);
          }
        }
    }
  }

  Var out = make_var(std::move(spikes));
  tape.record([x, out, h_all, layout, params, surrogate_alpha]() {
    if (!x->requires_grad) return;
    const Index b = layout.batch;
    const Index t_steps = layout.time;
    const Index l = layout.seq;
    const Index d = x->value.cols();
    MatrixXd g_u = MatrixXd::Zero(b * l, d);
    const double leak = 1.0 - 1.0 / params.tau;
    for (Index t = t_steps - 1; t >= 0; --t) {
      for (Index bi = 0; bi < b; ++bi) {
        const Index src = (bi * t_steps + t) * l;
        const Index dst = bi * l;
        for (Index r = 0; r < l; ++r)
          for (Index c = 0; c < d; ++c) {
            const double h = (*h_all)(src + r, c);
            const double s = out->value(src + r, c);
            const double sg = surrogate_grad(h - params.u_thr, surrogate_alpha);
            const double gs = out->grad(src + r, c);
            const double gu = g_u(dst + r, c);
            // dU/dH = (1 - S) + (u_reset - H) * dS/dH
            const double gh = gs * sg + gu * ((1.0 - s) + (params.u_reset - h) * sg);
            x->grad(src + r, c) += gh / params.tau;
            g_u(dst + r, c) = gh * leak;
          }
      }
    }
  });
  return out;
}

Var repeat_time(Tape& tape, const Var& x, Index batch, Index seq, Index time) {
  if (x->value.rows() != batch * seq) throw DimensionError("repeat_time: row layout mismatch");
  MatrixXd v(batch * time * seq, x->value.cols());
  for (Index bi = 0; bi < batch; ++bi)
    for (Index t = 0; t < time; ++t)
      v.middleRows((bi * time + t) * seq, seq) = x->value.middleRows(bi * seq, seq);
  Var out = make_var(std::move(v));
  tape.record([x, out, batch, seq, time]() {
    if (!x->requires_grad) return;
    for (Index bi = 0; bi < batch; ++bi)
      for (Index t = 0; t < time; ++t)
        x->grad.middleRows(bi * seq, seq) += out->grad.middleRows((bi * time + t) * seq, seq);
  });
  return out;
}

Var mean_over_time(Tape& tape, const Var& x, const RowLayout& layout) {
  if (x->value.rows() != layout.rows()) throw DimensionError("mean_over_time: layout mismatch");
  const double inv_t = 1.0 / static_cast<double>(layout.time);
  MatrixXd v = MatrixXd::Zero(layout.batch * layout.seq, x->value.cols());
  for (Index bi = 0; bi < layout.batch; ++bi)
    for (Index t = 0; t < layout.time; ++t)
      v.middleRows(bi * layout.seq, layout.seq) +=
          inv_t * x->value.middleRows((bi * layout.time + t) * layout.seq, layout.seq);
  Var out = make_var(std::move(v));
  tape.record([x, out, layout, inv_t]() {
    if (!x->requires_grad) return;
    for (Index bi = 0; bi < layout.batch; ++bi)
      for (Index t = 0; t < layout.time; ++t)
        x->grad.middleRows((bi * layout.time + t) * layout.seq, layout.seq) +=
            inv_t * out->grad.middleRows(bi * layout.seq, layout.seq);
  });
  return out;
}

Var select_position(Tape& tape, const Var& x, Index batch, Index seq, Index pos) {
  if (x->value.rows() != batch * seq) throw DimensionError("select_position: layout mismatch");
  if (pos < 0 || pos >= seq) throw DimensionError("select_position: position out of range");
  MatrixXd v(batch, x->value.cols());
  for (Index bi = 0; bi < batch; ++bi) v.row(bi) = x->value.row(bi * seq + pos);
  Var out = make_var(std::move(v));
  tape.record([x, out, batch, seq, pos]() {
    if (!x->requires_grad) return;
    for (Index bi = 0; bi < batch; ++bi) x->grad.row(bi * seq + pos) += out->grad.row(bi);
  });
  return out;
}

Var spiking_attention(Tape& tape, const Var& q, const Var& k, const Var& v,
                      const AttentionSpec& spec) {
  const Index b = spec.layout.batch;
  const Index t_steps = spec.layout.time;
  const Index l = spec.layout.seq;
  if (q->value.rows() != spec.layout.rows() || k->value.rows() != spec.layout.rows() ||
      v->value.rows() != spec.layout.rows())
    throw DimensionError("spiking_attention: row layout mismatch");
  if (q->value.cols() != k->value.cols())
    throw DimensionError("spiking_attention: Q/K channel mismatch");
  if (spec.bias.size() != 0 && (spec.bias.rows() != l || spec.bias.cols() != l))
    throw DimensionError("spiking_attention: bias must be L x L");

  const double sigma = spec.sigma_var ? spec.sigma_var->value(0, 0) : spec.sigma;
  const Index dv = v->value.cols();
  auto scores = std::make_shared<std::vector<MatrixXd>>();
  scores->reserve(static_cast<std::size_t>(b * t_steps));
  MatrixXd out_value(spec.layout.rows(), dv);

  for (Index bi = 0; bi < b; ++bi)
    for (Index t = 0; t < t_steps; ++t) {
      const Index at = (bi * t_steps + t) * l;
      const auto qb = q->value.middleRows(at, l);
      const auto kb = k->value.middleRows(at, l);
      MatrixXd s = qb * kb.transpose();
      if (spec.base == AttnBase::Xnor)
        s += (MatrixXd::Ones(l, q->value.cols()) - qb) *
             (MatrixXd::Ones(l, k->value.cols()) - kb).transpose();
      if (spec.bias.size() != 0) s += spec.bias;
      out_value.middleRows(at, l) = sigma * s * v->value.middleRows(at, l);
      scores->push_back(std::move(s));
    }

  Var out = make_var(std::move(out_value));
  Var sigma_var = spec.sigma_var;
  const AttnBase base = spec.base;
  tape.record([q, k, v, out, scores, sigma_var, sigma, b, t_steps, l, base]() {
    const Index dq = q->value.cols();
    const double sg = sigma_var ? sigma_var->value(0, 0) : sigma;
    for (Index bi = 0; bi < b; ++bi)
      for (Index t = 0; t < t_steps; ++t) {
        const Index at = (bi * t_steps + t) * l;
        const MatrixXd& s = (*scores)[static_cast<std::size_t>(bi * t_steps + t)];
        const auto g_out = out->grad.middleRows(at, l);
        const auto vb = v->value.middleRows(at, l);
        if (sigma_var && sigma_var->requires_grad)
          sigma_var->grad(0, 0) += (g_out.array() * (s * vb).array()).sum();
        const MatrixXd g_s = sg * g_out * vb.transpose();
        if (v->requires_grad) v->grad.middleRows(at, l).noalias() += sg * s.transpose() * g_out;
        const auto qb = q->value.middleRows(at, l);
        const auto kb = k->value.middleRows(at, l);
        if (base == AttnBase::Dot) {
          if (q->requires_grad) q->grad.middleRows(at, l).noalias() += g_s * kb;
          if (k->requires_grad) k->grad.middleRows(at, l).noalias() += g_s.transpose() * qb;
        } else {
          const MatrixXd ones = MatrixXd::Ones(l, dq);
          if (q->requires_grad)
            q->grad.middleRows(at, l).noalias() += g_s * (2.0 * kb - ones);
          if (k->requires_grad)
            k->grad.middleRows(at, l).noalias() += g_s.transpose() * (2.0 * qb - ones);
        }
      }
  });
  return out;
}

Var softmax_cross_entropy(Tape& tape, const Var& logits, const std::vector<int>& labels) {
  const Index n = logits->value.rows();
  if (static_cast<Index>(labels.size()) != n)
    throw DimensionError("softmax_cross_entropy: label count mismatch");
  auto probs = std::make_shared<MatrixXd>(logits->value);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mx = probs->row(i).maxCoeff();
    probs->row(i) = (probs->row(i).array() - mx).exp();
    probs->row(i) /= probs->row(i).sum();
    loss -= std::log(std::max((*probs)(i, labels[static_cast<std::size_t>(i)]), 1e-300));
  }
  Var out = make_var(MatrixXd::Constant(1, 1, loss / static_cast<double>(n)));
  tape.record([logits, out, probs, labels, n]() {
    if (!logits->requires_grad) return;
    const double g = out->grad(0, 0) / static_cast<double>(n);
    MatrixXd d = *probs;
    for (Index i = 0; i < n; ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    logits->grad += g * d;
  });
  return out;
}

Var mse_loss(Tape& tape, const Var& pred, const MatrixXd& target) {
  if (pred->value.rows() != target.rows() || pred->value.cols() != target.cols())
    throw DimensionError("mse_loss: shape mismatch");
  const double n = static_cast<double>(target.size());
  const MatrixXd diff = pred->value - target;
  Var out = make_var(MatrixXd::Constant(1, 1, diff.squaredNorm() / n));
  auto diff_ptr = std::make_shared<MatrixXd>(diff);
  tape.record([pred, out, diff_ptr, n]() {
    if (!pred->requires_grad) return;
    pred->grad += (2.0 / n) * out->grad(0, 0) * (*diff_ptr);
  });
  return out;
}

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<MatrixXd>& init_params, double eps) {
  std::vector<Var> params;
  params.reserve(init_params.size());
  for (const auto& p : init_params) params.push_back(make_var(p));

  std::vector<MatrixXd> analytic_grads;
  {
    Tape tape;
    Var out = f(tape, params);
    tape.backward(out);
    for (const auto& p : params) analytic_grads.push_back(p->grad);
  }

  const auto eval = [&f](const std::vector<Var>& ps) {
    Tape tape;
    for (const auto& p : ps) p->grad.setZero();
    Var out = f(tape, ps);
    return out->value(0, 0);
  };

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const MatrixXd& analytic = analytic_grads[pi];
    for (Index r = 0; r < analytic.rows(); ++r)
      for (Index c = 0; c < analytic.cols(); ++c) {
        const double saved = params[pi]->value(r, c);
        params[pi]->value(r, c) = saved + eps;
        const double f_plus = eval(params);
        params[pi]->value(r, c) = saved - eps;
        const double f_minus = eval(params);
        params[pi]->value(r, c) = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double a = analytic(r, c);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
        max_rel = std::max(max_rel, rel);
      }
  }
  return max_rel;
}

}  // namespace spikerpe::diff
