#include "spikerpe/model.hpp"

#include "spikerpe/attention.hpp"
#include "spikerpe/config.hpp"

#include "matrix_eq.hpp"

#include <doctest.h>

#include <cstdio>

using namespace spikerpe;

namespace {

ModelConfig small_classifier(PEVariant pe) {
  ModelConfig mc;
  mc.blocks = 2;
  mc.d_model = 16;
  mc.d_ffn = 32;
  mc.time_steps = 2;
  mc.seq_len = 8;
  mc.feature_dim = 4;
  mc.output_dim = 4;
  mc.classification = true;
  mc.pe = pe;
  return mc;
}

}  // namespace

TEST_CASE("pe variant string round trip") {
  for (const char* name : {"none", "gray", "gray2d", "log", "crpe", "dot-baseline"})
    CHECK(to_string(pe_variant_from_string(name)) == name);
  CHECK_THROWS_AS(pe_variant_from_string("rope"), ConfigurationError);
}

TEST_CASE("untrained model output is deterministic per seed") {
  const Dataset ds = gen_offset_copy(8, 4, 2, 3, 1);
  Model a(small_classifier(PEVariant::None), 5);
  Model b(small_classifier(PEVariant::None), 5);
  CHECK(matrix_eq(a.predict(ds.inputs), b.predict(ds.inputs)));
  Model c(small_classifier(PEVariant::None), 6);
  CHECK(!matrix_eq(a.predict(ds.inputs), c.predict(ds.inputs)));
}

TEST_CASE("positional encoding changes the forward pass") {
  const Dataset ds = gen_offset_copy(8, 4, 2, 4, 2);
  Model none(small_classifier(PEVariant::None), 9);
  Model gray(small_classifier(PEVariant::Gray), 9);
  CHECK(!matrix_eq(none.predict(ds.inputs), gray.predict(ds.inputs)));
}

TEST_CASE("readout position selects which sequence position the head reads") {
  const Dataset ds = gen_offset_copy(8, 4, 2, 4, 3);
  ModelConfig at_end = small_classifier(PEVariant::None);
  ModelConfig at_mid = small_classifier(PEVariant::None);
  at_mid.readout_pos = 3;
  CHECK(!matrix_eq(Model(at_end, 7).predict(ds.inputs), Model(at_mid, 7).predict(ds.inputs)));
  ModelConfig out_of_range = small_classifier(PEVariant::None);
  out_of_range.readout_pos = 8;
  CHECK_THROWS_AS(out_of_range.validate(), ConfigurationError);
}

TEST_CASE("pe variant does not change the learnable parameter count") {
  CHECK(Model(small_classifier(PEVariant::None), 1).parameter_count() ==
        Model(small_classifier(PEVariant::Gray), 1).parameter_count());
  CHECK(Model(small_classifier(PEVariant::None), 1).parameter_count() ==
        Model(small_classifier(PEVariant::Log), 1).parameter_count());
}

TEST_CASE("first-block attention is permutation-equivariant without PE") {
  const Index l = 8;
  const Dataset ds = gen_offset_copy(l, 4, 2, 1, 3);
  Model model(small_classifier(PEVariant::None), 11);

  const MatrixXd& x = ds.inputs[0];
  MatrixXd xp(l, x.cols());
  std::vector<Index> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  for (Index i = 0; i < l; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);

  SpikeTensor q, k, qp, kp;
  model.probe_first_block(x, q, k);
  model.probe_first_block(xp, qp, kp);

  const AttnMap base = xnor_map(q, k);
  const AttnMap base_p = xnor_map(qp, kp);
  for (Index t = 0; t < base.time_steps(); ++t)
    for (Index i = 0; i < l; ++i)
      for (Index j = 0; j < l; ++j)
        CHECK(base_p.scores[static_cast<std::size_t>(t)](i, j) ==
              base.scores[static_cast<std::size_t>(t)](perm[static_cast<std::size_t>(i)],
                                                        perm[static_cast<std::size_t>(j)]));

  // Gray-PE breaks the equivariance for this permutation.
  const int b = default_gray_bits(l);
  const AttnMap gray = gray_pe_map(q, k, b);
  const AttnMap gray_p = gray_pe_map(qp, kp, b);
  bool changed = false;
  for (Index i = 0; i < l && !changed; ++i)
    for (Index j = 0; j < l && !changed; ++j)
      changed = gray_p.scores[0](i, j) !=
                gray.scores[0](perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  CHECK(changed);
}

TEST_CASE("zero-epoch training records initial metrics only") {
  const Dataset train = gen_offset_copy(8, 4, 2, 16, 1);
  const Dataset val = gen_offset_copy(8, 4, 2, 8, 2);
  Model model(small_classifier(PEVariant::Gray), 1);
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 1;
  const auto history = model.train(train, val, tc);
  REQUIRE(history.size() == 1);
  CHECK(history[0].epoch == 0);
  CHECK(history[0].validation.accuracy.has_value());
}

TEST_CASE("short training is deterministic and reduces the loss") {
  const Dataset train = gen_offset_copy(8, 4, 1, 64, 1);
  const Dataset val = gen_offset_copy(8, 4, 1, 32, 2);
  TrainConfig tc;
  tc.epochs = 8;
  tc.seed = 4;
  tc.batch_size = 16;

  Model a(small_classifier(PEVariant::Gray), 4);
  Model b(small_classifier(PEVariant::Gray), 4);
  const auto ha = a.train(train, val, tc);
  const auto hb = b.train(train, val, tc);
  REQUIRE(ha.size() == hb.size());
  for (std::size_t e = 0; e < ha.size(); ++e) {
    CHECK(ha[e].train_loss == hb[e].train_loss);
    CHECK(ha[e].validation.loss == hb[e].validation.loss);
  }
  // Entry 0 is the pre-training snapshot and carries no train loss; compare
  // the last epoch against the first trained epoch.
  REQUIRE(ha.size() >= 2);
  CHECK(ha.back().train_loss < ha[1].train_loss);
}

TEST_CASE("weights round trip through the checkpoint format") {
  const Dataset ds = gen_offset_copy(8, 4, 2, 4, 7);
  Model model(small_classifier(PEVariant::Log), 13);
  const MatrixXd before = model.predict(ds.inputs);

  const std::string path = "weights_roundtrip.bin";
  model.save_weights(path, 0xabcdef);
  Model fresh(small_classifier(PEVariant::Log), 99);
  fresh.load_weights(path);
  std::remove(path.c_str());
  CHECK(matrix_eq(fresh.predict(ds.inputs), before));
}

TEST_CASE("model config validation") {
  ModelConfig mc = small_classifier(PEVariant::Gray);
  mc.gray_bits = 2;  // 2^2 < L = 8
  CHECK_THROWS_AS(mc.validate(), ConfigurationError);
  ModelConfig bad = small_classifier(PEVariant::None);
  bad.d_model = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
  ModelConfig g2 = small_classifier(PEVariant::Gray2D);
  g2.grid = {3, 3};  // L = 8 != 9
  CHECK_THROWS_AS(g2.validate(), ConfigurationError);
}
