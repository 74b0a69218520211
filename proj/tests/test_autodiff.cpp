#include "spikerpe/autodiff.hpp"

#include "matrix_eq.hpp"

#include <doctest.h>

using namespace spikerpe;
using namespace spikerpe::diff;

TEST_CASE("linear value and gradient hand case") {
  Tape tape;
  MatrixXd xv(1, 2);
  xv << 1, 2;
  MatrixXd wv(2, 1);
  wv << 1, 1;
  Var x = make_var(xv, false);
  Var w = make_var(wv);
  Var y = linear(tape, x, w);
  CHECK(y->value(0, 0) == doctest::Approx(3.0));

  // mse against (y - 0.5) makes dL/dy exactly 1, so grad w == x^T.
  Var loss = mse_loss(tape, y, MatrixXd::Constant(1, 1, 2.5));
  tape.backward(loss);
  CHECK(w->grad(0, 0) == doctest::Approx(1.0));
  CHECK(w->grad(1, 0) == doctest::Approx(2.0));
}

TEST_CASE("linear with identity weights is the identity") {
  Tape tape;
  MatrixXd xv(2, 3);
  xv << 1, 2, 3, 4, 5, 6;
  Var y = linear(tape, make_var(xv, false), make_var(MatrixXd::Identity(3, 3), false));
  CHECK(matrix_eq(y->value, xv));
}

TEST_CASE("linear rejects mismatched inner dimensions") {
  Tape tape;
  CHECK_THROWS_AS(
      linear(tape, make_var(MatrixXd::Zero(2, 3), false), make_var(MatrixXd::Zero(4, 2), false)),
      DimensionError);
}

TEST_CASE("batch norm hand cases") {
  Tape tape;
  BatchNormState state = BatchNormState::init(1);

  MatrixXd constant = MatrixXd::Constant(4, 1, 3.0);
  Var out = batch_norm(tape, make_var(constant, false), state, true);
  CHECK(out->value.cwiseAbs().maxCoeff() < 1e-6);  // variance floor via epsilon

  BatchNormState zero_gamma = BatchNormState::init(2);
  zero_gamma.gamma->value.setZero();
  zero_gamma.beta->value.setConstant(0.25);
  MatrixXd xv = MatrixXd::Random(6, 2);
  Var out2 = batch_norm(tape, make_var(xv, false), zero_gamma, true);
  CHECK((out2->value.array() - 0.25).abs().maxCoeff() < 1e-12);

  BatchNormState two = BatchNormState::init(1);
  MatrixXd pair(2, 1);
  pair << 0, 2;
  Var out3 = batch_norm(tape, make_var(pair, false), two, true);
  CHECK(out3->value(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(out3->value(1, 0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("batch norm normalizes large batches") {
  Tape tape;
  BatchNormState state = BatchNormState::init(3);
  MatrixXd xv = 5.0 * MatrixXd::Random(128, 3);
  xv.array() += 2.0;
  Var out = batch_norm(tape, make_var(xv, false), state, true);
  for (Index c = 0; c < 3; ++c) {
    const double mean = out->value.col(c).mean();
    const double var = (out->value.col(c).array() - mean).square().sum() / 128.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("spike layer forward behavior") {
  Tape tape;
  const LIFParams p;
  const RowLayout layout{1, 3, 1};  // batch 1, T 3, one position

  // Large constant current: spikes at every step.
  Var big = make_var(MatrixXd::Constant(3, 2, 5.0), false);
  Var s = spike_layer(tape, big, layout, p, 2.0);
  CHECK((s->value.array() == 1.0).all());

  // Zero current from rest: never spikes.
  Var zero = make_var(MatrixXd::Zero(3, 2), false);
  Var s0 = spike_layer(tape, zero, layout, p, 2.0);
  CHECK(s0->value.isZero(0.0));

  // Output is strictly binary for arbitrary input.
  Var r = make_var(3.0 * MatrixXd::Random(3, 2), false);
  Var sr = spike_layer(tape, r, layout, p, 2.0);
  CHECK(((sr->value.array() == 0.0) || (sr->value.array() == 1.0)).all());
}

TEST_CASE("spike layer surrogate gradient at threshold") {
  // One step, one neuron; x chosen so H = u_thr exactly. With loss = S^2,
  // dL/dS = 2 and dL/dx = 2 * surrogate_grad(0, alpha) / tau = alpha / tau.
  Tape tape;
  const LIFParams p;  // tau = 2
  Var x = make_var(MatrixXd::Constant(1, 1, 2.0));
  Var s = spike_layer(tape, x, RowLayout{1, 1, 1}, p, 2.0);
  CHECK(s->value(0, 0) == 1.0);
  Var loss = mse_loss(tape, s, MatrixXd::Zero(1, 1));
  tape.backward(loss);
  CHECK(x->grad(0, 0) == doctest::Approx(2.0 / p.tau).epsilon(1e-12));
}

TEST_CASE("grad check validates smooth layers") {
  MatrixXd target = MatrixXd::Random(4, 2);
  const double err = grad_check(
      [&target](Tape& tape, const std::vector<Var>& params) {
        return mse_loss(tape, linear(tape, params[0], params[1]), target);
      },
      {MatrixXd::Random(4, 3), MatrixXd::Random(3, 2)}, 1e-4);
  CHECK(err < 1e-5);
}

TEST_CASE("softmax cross entropy of uniform logits") {
  Tape tape;
  Var logits = make_var(MatrixXd::Zero(2, 4), false);
  Var loss = softmax_cross_entropy(tape, logits, {1, 3});
  CHECK(loss->value(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("repeat/mean/select pipeline shapes and values") {
  Tape tape;
  MatrixXd xv(2, 3);  // batch 1, seq 2
  xv << 1, 2, 3, 4, 5, 6;
  Var rep = repeat_time(tape, make_var(xv, false), 1, 2, 3);
  CHECK(rep->value.rows() == 6);
  Var mean = mean_over_time(tape, rep, RowLayout{1, 3, 2});
  CHECK(matrix_eq(mean->value, xv));
  Var last = select_position(tape, mean, 1, 2, 1);
  CHECK(last->value.rows() == 1);
  CHECK(last->value(0, 2) == doctest::Approx(6.0));
}
