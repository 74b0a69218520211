#include "spikerpe/verify.hpp"

#include "spikerpe/attention.hpp"
#include "spikerpe/autodiff.hpp"
#include "spikerpe/bitcodec.hpp"
#include "spikerpe/neuron.hpp"
#include "spikerpe/tasks.hpp"

#include <json.hpp>

#include <cmath>
#include <random>
#include <sstream>

namespace spikerpe {

namespace {

SpikeTensor random_spikes(Index t, Index l, Index d, std::mt19937_64& rng, double p_one = 0.5) {
  SpikeTensor s(t, l, d);
  for (auto& m : s.steps)
    for (Index i = 0; i < l; ++i)
      for (Index j = 0; j < d; ++j)
        m(i, j) = (static_cast<double>(rng() >> 11) * 0x1.0p-53) < p_one ? 1 : 0;
  return s;
}

int naive_hamming(const BitMatrix& a, Index i, const BitMatrix& b, Index j) {
  int d = 0;
  for (Index c = 0; c < a.cols(); ++c)
    if (a(i, c) != b(j, c)) ++d;
  return d;
}

template <typename A, typename B>
bool matrix_eq(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

int exact_ceil_log2_int(Index v) {
  int m = 0;
  while ((Index{1} << m) < v) ++m;
  return m;
}

CheckResult pass(std::string name, std::string details = "") {
  return {std::move(name), true, std::move(details)};
}

CheckResult fail(std::string name, std::string details) {
  return {std::move(name), false, std::move(details)};
}

}  // namespace

CheckResult check_theorem1() {
  const auto report = verify_theorem1(12);
  std::ostringstream os;
  os << report.pairs_checked << " (a,n) pairs, " << report.checks_performed
     << " checks across widths, " << report.counterexamples.size() << " counterexamples";
  if (!report.ok()) {
    const auto& ce = report.counterexamples.front();
    os << "; first: b=" << ce.bit_width << " a=" << ce.a << " n=" << ce.n << " d=" << ce.distance;
    return fail("theorem1", os.str());
  }
  return pass("theorem1", os.str());
}

CheckResult check_xnor_duality() {
  std::mt19937_64 rng(0x5eed0001);
  for (const Index d : {Index{4}, Index{32}, Index{256}}) {
    for (int trial = 0; trial < 10000; ++trial) {
      SpikeTensor rows = random_spikes(1, 2, d, rng);
      const AttnMap map = xnor_map(rows, rows);
      const int expected = static_cast<int>(d) - naive_hamming(rows.steps[0], 0, rows.steps[0], 1);
      if (map.scores[0](0, 1) != expected)
        return fail("xnor_duality",
                    "mismatch at D=" + std::to_string(d) + " trial " + std::to_string(trial));
    }
  }
  return pass("xnor_duality", "3 x 10^4 random row pairs, D in {4,32,256}");
}

CheckResult check_gray_decomposition() {
  std::mt19937_64 rng(0x5eed0002);
  int instances = 0;
  for (Index l = 2; l <= 64; l += (l < 8 ? 1 : 7)) {
    const int b = default_gray_bits(l);
    const MatrixXi term = gray_positional_term(l, b);
    for (int rep = 0; rep < 10; ++rep) {
      SpikeTensor q = random_spikes(2, l, 8, rng);
      SpikeTensor k = random_spikes(2, l, 8, rng);
      const AttnMap base = xnor_map(q, k);
      const AttnMap gray = gray_pe_map(q, k, b);
      for (Index t = 0; t < 2; ++t)
        if (!matrix_eq(gray.scores[static_cast<std::size_t>(t)],
                       (base.scores[static_cast<std::size_t>(t)] + term).eval()))
          return fail("gray_decomposition", "mismatch at L=" + std::to_string(l));
      ++instances;
    }
  }
  return pass("gray_decomposition",
              std::to_string(instances) + " random (Q,K) instances over L in [2,64]");
}

CheckResult check_gray_power_of_two() {
  const Index l = 64;
  const int b = default_gray_bits(l);
  const MatrixXi term = gray_positional_term(l, b);
  for (int n = 0; (Index{1} << n) < l; ++n) {
    const Index step = Index{1} << n;
    const int expected = n == 0 ? b - 1 : b - 2;
    for (Index i = 0; i + step < l; ++i)
      if (term(i, i + step) != expected)
        return fail("gray_power_of_two", "n=" + std::to_string(n) + " i=" + std::to_string(i) +
                                             " term=" + std::to_string(term(i, i + step)));
  }
  return pass("gray_power_of_two", "positional term b-1 at distance 1, b-2 at 2^n, L=64");
}

CheckResult check_log_pe_matrix() {
  for (Index l = 2; l <= 512; ++l) {
    const RelativeBias bias = log_pe_bias(l);
    for (Index i = 0; i < l; ++i)
      for (Index j = 0; j < l; ++j) {
        if (bias.r(i, j) != bias.r(j, i)) return fail("log_pe_matrix", "asymmetric at L=" + std::to_string(l));
        if (bias.r(i, j) < 0) return fail("log_pe_matrix", "negative entry at L=" + std::to_string(l));
        if (bias.r(i, j) != bias.r(0, std::abs(i - j)))
          return fail("log_pe_matrix", "not a function of |i-j| at L=" + std::to_string(l));
      }
    for (Index d = 1; d < l; ++d)
      if (bias.r(0, d) > bias.r(0, d - 1))
        return fail("log_pe_matrix", "not non-increasing at L=" + std::to_string(l));
    if (l >= 3 && bias.r(0, 0) != exact_ceil_log2_int(l - 1))
      return fail("log_pe_matrix", "diagonal wrong at L=" + std::to_string(l));
    if (bias.r(0, l - 1) != 0)
      return fail("log_pe_matrix", "max-distance entry nonzero at L=" + std::to_string(l));
  }
  return pass("log_pe_matrix", "all L in [2,512]: symmetric, non-negative, monotone, exact diagonal");
}

CheckResult check_permutation_property() {
  std::mt19937_64 rng(0x5eed0003);
  const Index l = 8;
  for (int rep = 0; rep < 20; ++rep) {
    SpikeTensor q = random_spikes(2, l, 16, rng);
    SpikeTensor k = random_spikes(2, l, 16, rng);
    std::vector<Index> perm(static_cast<std::size_t>(l));
    for (Index i = 0; i < l; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng() % i)]);

    SpikeTensor qp(2, l, 16), kp(2, l, 16);
    for (Index t = 0; t < 2; ++t)
      for (Index i = 0; i < l; ++i) {
        qp.steps[static_cast<std::size_t>(t)].row(i) =
            q.steps[static_cast<std::size_t>(t)].row(perm[static_cast<std::size_t>(i)]);
        kp.steps[static_cast<std::size_t>(t)].row(i) =
            k.steps[static_cast<std::size_t>(t)].row(perm[static_cast<std::size_t>(i)]);
      }

    const AttnMap base = xnor_map(q, k);
    const AttnMap base_p = xnor_map(qp, kp);
    for (Index t = 0; t < 2; ++t)
      for (Index i = 0; i < l; ++i)
        for (Index j = 0; j < l; ++j)
          if (base_p.scores[static_cast<std::size_t>(t)](i, j) !=
              base.scores[static_cast<std::size_t>(t)](perm[static_cast<std::size_t>(i)],
                                                        perm[static_cast<std::size_t>(j)]))
            return fail("permutation_property", "xnor map not equivariant");
  }

  // Gray-PE must break equivariance for some permutation.
  const int b = default_gray_bits(l);
  SpikeTensor q0(1, l, 4), k0(1, l, 4);  // all-zero content isolates the positional term
  const AttnMap gray = gray_pe_map(q0, k0, b);
  bool broken = false;
  std::vector<Index> perm(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::swap(perm[0], perm[1]);
  const AttnMap gray_p = gray_pe_map(q0, k0, b);  // content unchanged under permutation
  for (Index i = 0; i < l && !broken; ++i)
    for (Index j = 0; j < l && !broken; ++j)
      if (gray_p.scores[0](i, j) != gray.scores[0](perm[static_cast<std::size_t>(i)],
                                                   perm[static_cast<std::size_t>(j)]))
        broken = true;
  if (!broken) return fail("permutation_property", "gray map unexpectedly equivariant");
  return pass("permutation_property", "xnor equivariant on 20 random L=8 instances; gray breaks it");
}

CheckResult check_gradients() {
  using diff::Tape;
  using diff::Var;
  std::mt19937_64 rng(0x5eed0004);
  const auto randn = [&rng](Index r, Index c) {
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) {
        const double u1 = std::max(static_cast<double>(rng() >> 11) * 0x1.0p-53, 1e-300);
        const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m(i, j) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
      }
    return m;
  };

  const MatrixXd target = randn(6, 2);
  double err = diff::grad_check(
      [&target](Tape& tape, const std::vector<Var>& p) {
        return diff::mse_loss(tape, diff::linear(tape, p[0], p[1]), target);
      },
      {randn(6, 4), randn(4, 2)}, 1e-4);
  if (err > 1e-5) return fail("gradients", "linear grad error " + std::to_string(err));

  const MatrixXd bn_target = randn(8, 3);
  err = diff::grad_check(
      [&bn_target](Tape& tape, const std::vector<Var>& p) {
        diff::BatchNormState state = diff::BatchNormState::init(3);
        state.gamma = p[1];
        state.beta = p[2];
        return diff::mse_loss(tape, diff::batch_norm(tape, p[0], state, true), bn_target);
      },
      {randn(8, 3), randn(1, 3), randn(1, 3)}, 1e-4);
  if (err > 1e-4) return fail("gradients", "batch_norm grad error " + std::to_string(err));

  const MatrixXd comp_target = randn(8, 3);
  err = diff::grad_check(
      [&comp_target](Tape& tape, const std::vector<Var>& p) {
        diff::BatchNormState state = diff::BatchNormState::init(3);
        state.gamma = p[2];
        state.beta = p[3];
        Var y = diff::batch_norm(tape, diff::linear(tape, p[0], p[1]), state, true);
        return diff::mse_loss(tape, y, comp_target);
      },
      {randn(8, 4), randn(4, 3), randn(1, 3), randn(1, 3)}, 1e-4);
  if (err > 1e-4) return fail("gradients", "linear+bn grad error " + std::to_string(err));

  // Fused attention, both bases, with a constant bias and a learnable scale.
  for (const auto base : {diff::AttnBase::Dot, diff::AttnBase::Xnor}) {
    const MatrixXd attn_target = randn(2 * 2 * 3, 2);
    err = diff::grad_check(
        [&attn_target, base](Tape& tape, const std::vector<Var>& p) {
          diff::AttentionSpec spec;
          spec.layout = {2, 2, 3};
          spec.base = base;
          spec.bias = MatrixXd::Constant(3, 3, 0.5);
          spec.sigma_var = p[3];
          Var o = diff::spiking_attention(tape, p[0], p[1], p[2], spec);
          return diff::mse_loss(tape, o, attn_target);
        },
        {randn(12, 4), randn(12, 4), randn(12, 2), MatrixXd::Constant(1, 1, 0.7)}, 1e-4);
    if (err > 1e-4) return fail("gradients", "attention grad error " + std::to_string(err));
  }

  const MatrixXd pool_target = randn(2, 3);
  err = diff::grad_check(
      [&pool_target](Tape& tape, const std::vector<Var>& p) {
        Var rep = diff::repeat_time(tape, p[0], 2, 4, 3);
        Var mean = diff::mean_over_time(tape, rep, {2, 3, 4});
        Var last = diff::select_position(tape, mean, 2, 4, 3);
        return diff::mse_loss(tape, diff::add_bias(tape, last, p[1]), pool_target);
      },
      {randn(8, 3), randn(1, 3)}, 1e-4);
  if (err > 1e-4) return fail("gradients", "pooling grad error " + std::to_string(err));

  err = diff::grad_check(
      [](Tape& tape, const std::vector<Var>& p) {
        return diff::softmax_cross_entropy(tape, p[0], {0, 2, 1});
      },
      {randn(3, 4)}, 1e-4);
  if (err > 1e-4) return fail("gradients", "cross_entropy grad error " + std::to_string(err));

  return pass("gradients", "linear, batch_norm, composition, attention, pooling, loss all < 1e-4");
}

CheckResult check_surrogate() {
  const double alpha = 2.0;
  if (std::abs(surrogate_grad(0.0, alpha) - alpha / 2.0) > 1e-12)
    return fail("surrogate", "peak is not alpha/2");
  for (double x : {0.25, 1.0, 3.7})
    if (std::abs(surrogate_grad(x, alpha) - surrogate_grad(-x, alpha)) > 1e-15)
      return fail("surrogate", "not even");
  // The antiderivative is arctan(pi * alpha * x / 2) / pi, so the full-line
  // mass is exactly 1 and the truncated mass over [-X, X] is known in closed
  // form. Check the trapezoid sum against the truncated value (tight) and the
  // truncated value against 1 (tail bound).
  const double half_width = 50.0;
  const double pi = 3.14159265358979323846;
  const double truncated = 2.0 * std::atan(pi * alpha * half_width / 2.0) / pi;
  const int steps = 2000000;
  const double h = 2.0 * half_width / steps;
  double integral = 0.5 * (surrogate_grad(-half_width, alpha) + surrogate_grad(half_width, alpha));
  for (int i = 1; i < steps; ++i) integral += surrogate_grad(-half_width + h * i, alpha);
  integral *= h;
  if (std::abs(integral - truncated) > 1e-6)
    return fail("surrogate", "trapezoid " + std::to_string(integral) + " vs analytic " +
                                 std::to_string(truncated));
  if (std::abs(truncated - 1.0) > 5e-3)
    return fail("surrogate", "truncated mass " + std::to_string(truncated));
  return pass("surrogate", "peak alpha/2, even, unit total mass");
}

CheckResult check_lut_storage() {
  const Log2LUT lut = build_log2_lut(8, 16, 8);
  if (lut.storage_bits() != 384)
    return fail("lut_storage", "expected 384 bits, got " + std::to_string(lut.storage_bits()));
  double prev = -1.0;
  std::ostringstream os;
  for (int k : {1, 2, 4, 8, 16}) {
    const Log2LUT t = build_log2_lut(8, k, 8);
    os << "K=" << k << " err=" << t.max_abs_error << " ";
    if (prev >= 0.0 && t.max_abs_error > prev + 1e-12)
      return fail("lut_storage", "error not non-increasing in K: " + os.str());
    prev = t.max_abs_error;
  }
  return pass("lut_storage", os.str());
}

Log2LUT recorded_exact_lut() { return build_log2_lut(9, 64, 16); }

CheckResult check_lut_equivalence() {
  const Log2LUT lut = recorded_exact_lut();
  for (Index l = 2; l <= 512; ++l) {
    const RelativeBias exact = log_pe_bias(l);
    const RelativeBias approx = lut_log_pe_bias(l, lut);
    if (!matrix_eq(exact.r, approx.r))
      return fail("lut_equivalence", "mismatch at L=" + std::to_string(l));
  }
  const Log2LUT coarse = build_log2_lut(9, 1, 4);
  if (matrix_eq(lut_log_pe_bias(168, coarse).r, log_pe_bias(168).r))
    return fail("lut_equivalence", "coarse K=1,P=4 table unexpectedly exact at L=168");
  return pass("lut_equivalence",
              "N=9,K=64,P=16 exact for all L in [2,512]; coarse table mismatches as expected");
}

CheckResult check_metrics() {
  MatrixXd y(3, 1), yhat(3, 1);
  y << 1, 2, 3;
  yhat << 1, 2, 4;
  const double r2 = metric_r2(yhat, y);
  // The middle element sits on the column mean and is excluded; the two
  // remaining ratios are 0 and 1 -> 1 - 1/2.
  if (std::abs(r2 - 0.5) > 1e-12)
    return fail("metrics", "hand R^2 case: got " + std::to_string(r2));
  if (std::abs(metric_r2(y, y) - 1.0) > 1e-12) return fail("metrics", "R^2 of exact prediction");
  MatrixXd mean_pred = MatrixXd::Constant(3, 1, 2.0);
  if (std::abs(metric_r2(mean_pred, y)) > 1e-12) return fail("metrics", "R^2 of mean baseline");

  MatrixXd y2(2, 1), yhat2(2, 1);
  y2 << 0, 2;
  yhat2 << 1, 1;
  if (std::abs(metric_rse(yhat2, y2) - 1.0) > 1e-12) return fail("metrics", "hand RSE case");
  if (std::abs(metric_rse(y2, y2)) > 1e-12) return fail("metrics", "RSE of exact prediction");

  std::mt19937_64 rng(0x5eed0005);
  MatrixXd target(16, 3), start(16, 3);
  for (Index i = 0; i < 16; ++i)
    for (Index j = 0; j < 3; ++j) {
      target(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      start(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    }
  double prev_rse = 1e300, prev_r2 = -1e300;
  for (double lambda : {1.0, 0.75, 0.5, 0.25, 0.0}) {
    const MatrixXd pred = target + lambda * (start - target);
    const double rse = metric_rse(pred, target);
    const double r2v = metric_r2(pred, target);
    if (rse > prev_rse + 1e-12 || r2v < prev_r2 - 1e-12)
      return fail("metrics", "quality not monotone under interpolation");
    prev_rse = rse;
    prev_r2 = r2v;
  }
  return pass("metrics", "frozen hand cases and monotone-quality property");
}

std::vector<CheckResult> verify_scope(const std::string& scope) {
  std::vector<CheckResult> results;
  const bool all = scope == "all";
  if (all || scope == "theorem1") results.push_back(check_theorem1());
  if (all || scope == "attention") {
    results.push_back(check_xnor_duality());
    results.push_back(check_gray_decomposition());
    results.push_back(check_gray_power_of_two());
    results.push_back(check_log_pe_matrix());
    results.push_back(check_permutation_property());
  }
  if (all || scope == "gradients") {
    results.push_back(check_gradients());
    results.push_back(check_surrogate());
  }
  if (all || scope == "lut") {
    results.push_back(check_lut_storage());
    results.push_back(check_lut_equivalence());
  }
  if (all || scope == "metrics") results.push_back(check_metrics());
  if (results.empty()) throw ConfigurationError("verify: unknown scope '" + scope + "'");
  return results;
}

std::string results_to_json(const std::vector<CheckResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  bool all_passed = true;
  for (const auto& r : results) {
    arr.push_back({{"name", r.name}, {"passed", r.passed}, {"details", r.details}});
    all_passed = all_passed && r.passed;
  }
  nlohmann::json root = {{"all_passed", all_passed}, {"checks", arr}};
  return root.dump(2);
}

}  // namespace spikerpe
