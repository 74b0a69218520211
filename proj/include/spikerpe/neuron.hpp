#pragma once

#include "spikerpe/types.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace spikerpe {

struct LIFParams {
  double tau = 2.0;
  double u_thr = 1.0;
  double u_reset = 0.0;
};

struct LIFState {
  VectorXd u;  // per-neuron membrane potential

  static LIFState rest(Index n, const LIFParams& p) {
    return LIFState{VectorXd::Constant(n, p.u_reset)};
  }
};

// One LIF update:
//   H = u + (I - (u - u_reset)) / tau
//   spike = Theta(H - u_thr)        (>= at equality)
//   u'    = H * (1 - spike) + u_reset * spike
inline std::pair<VectorXd, LIFState> lif_step(const LIFState& state, const VectorXd& input_current,
                                              const LIFParams& params) {
  if (state.u.size() != input_current.size())
    throw DimensionError("lif_step: state and input lengths differ");
  if (!input_current.allFinite() || !state.u.allFinite())
    throw NumericError("lif_step: non-finite input");
  const VectorXd h = state.u + (input_current - (state.u.array() - params.u_reset).matrix()) / params.tau;
  VectorXd spikes(h.size());
  LIFState next;
  next.u.resize(h.size());
  for (Index i = 0; i < h.size(); ++i) {
    const bool fire = h(i) >= params.u_thr;
    spikes(i) = fire ? 1.0 : 0.0;
    next.u(i) = fire ? params.u_reset : h(i);
  }
  return {std::move(spikes), std::move(next)};
}

// Derivative of the arctangent spike relaxation (1/pi) * atan(pi*alpha*x/2) + 1/2,
// used as the backward of the Heaviside step. Peaks at alpha/2 for x = 0.
inline double surrogate_grad(double h_minus_thr, double alpha) {
  const double z = std::numbers::pi * alpha * h_minus_thr / 2.0;
  return alpha / (2.0 * (1.0 + z * z));
}

}  // namespace spikerpe
