#include <gtest/gtest.h>

#include <cmath>

#include "lenerf/train/gradcheck_suites.hpp"
#include "support.hpp"

using namespace lenerf;

namespace {

double tv_value(const Mat<double>& m, Index gx, Index gy, Index gz) {
  ad::Tape<double> t;
  return tv_loss(t.constant(m), gx, gy, gz).scalar();
}

double sparsity_value(std::vector<double> v, Index k) {
  ad::Tape<double> t;
  return sparsity_loss(t.constant(Eigen::Map<Mat<double>>(v.data(), Index(v.size()), 1)), k).scalar();
}

const double kEps = 1e-12;

}  // namespace

TEST(TvLoss, ConstantGridIsSqrtEps) {
  EXPECT_NEAR(tv_value(Mat<double>::Constant(27, 1, 0.4), 3, 3, 3), std::sqrt(kEps), 1e-18);
}

TEST(TvLoss, TwoByOneByOne) {
  Mat<double> m(2, 1);
  m << 0, 1;
  EXPECT_NEAR(tv_value(m, 2, 1, 1), (std::sqrt(1 + kEps) + std::sqrt(kEps)) / 2, 1e-15);
  EXPECT_NEAR(tv_value(m, 2, 1, 1), 0.5, 1e-6);
}

TEST(TvLoss, CornerOfTwoCube) {
  Mat<double> m = Mat<double>::Zero(8, 1);
  m(0, 0) = 1;
  EXPECT_NEAR(tv_value(m, 2, 2, 2), (std::sqrt(3 + kEps) + 7 * std::sqrt(kEps)) / 8, 1e-15);
}

TEST(TvLoss, NonNegativeAndGradchecks) {
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    Mat<double> m(64, 1);
    for (Index k = 0; k < 64; ++k) m(k, 0) = rng.uniform();
    EXPECT_GE(tv_value(m, 4, 4, 4), 0.0);
  }
  EXPECT_LT(check_tv(1).max_rel_error, 1e-6);
  EXPECT_THROW(tv_value(Mat<double>::Zero(5, 1), 2, 2, 2), ConfigError);
}

TEST(SparsityLoss, Examples) {
  EXPECT_NEAR(sparsity_value({0.5, 0.5, 0.5, 0.5}, 1), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(sparsity_value({0.9, 0.5, 0.1}, 1), -2 * std::log(0.9), 1e-12);
  EXPECT_NEAR(sparsity_value({0.9, 0.5, 0.1}, 1), 0.2107, 5e-5);
  EXPECT_LE(sparsity_value({1.0, 1.0, 0.5, 0.0, 0.0}, 2), 2 * 2 * 2e-6);
  EXPECT_THROW(sparsity_value({0.5, 0.5}, 2), ConfigError);
}

TEST(SparsityLoss, PermutationInvariant) {
  EXPECT_EQ(sparsity_value({0.3, 0.8, 0.1, 0.6, 0.95}, 2), sparsity_value({0.95, 0.1, 0.6, 0.3, 0.8}, 2));
  EXPECT_LT(check_sparsity(1).max_rel_error, 1e-6);
}

TEST(AfnLoss, WeightsAndLinearity) {
  ad::Tape<double> t;
  auto c = [&](double v) { return t.constant(Mat<double>::Constant(1, 1, v)); };
  EXPECT_EQ(afn_loss(c(0.3), c(0.2), c(1.1), c(0.7), AfnWeights{0, 0, 0, 0}).scalar(), 0.0);
  EXPECT_EQ(afn_loss(c(0.0), c(0.2), c(1.1), c(0.7), AfnWeights{1, 0, 0, 0}).scalar(), 0.0);
  const AfnWeights w;
  AfnWeights w2 = w;
  w2.tv *= 2;
  const double base = afn_loss(c(0.3), c(0.2), c(1.1), c(0.7), w).scalar();
  const double doubled = afn_loss(c(0.3), c(0.2), c(1.1), c(0.7), w2).scalar();
  EXPECT_NEAR(doubled - base, w.tv * 0.2, 1e-15);
}

TEST(Trainer, ZeroStepsKeepsInitialisation) {
  test::SmallEditSetup s;
  const ParamStore<float> before = s.edit.params;
  EditTrainer<float> tr(*s.field, test::small_train(0), default_vocabulary());
  tr.train(0);
  EXPECT_TRUE(test::bit_equal(before, s.edit.params));
  EXPECT_TRUE(tr.log().empty());
}

TEST(Trainer, GeneratorStaysFrozenAndEditMoves) {
  test::SmallEditSetup s(3, true);
  const ParamStore<float> gen_before = s.gen.params, edit_before = s.edit.params;
  EditTrainer<float> tr(*s.field, test::small_train(3), default_vocabulary());
  tr.train();
  EXPECT_TRUE(test::bit_equal(gen_before, s.gen.params));
  EXPECT_FALSE(test::bit_equal(edit_before, s.edit.params));
  EXPECT_EQ(tr.log().size(), 3u);
}

TEST(Trainer, FrozenMutationIsDetected) {
  ParamStore<float> a;
  a.add("synth.x", Mat<float>::Zero(2, 2));
  ParamStore<float> b = a;
  b.at("synth.x").value(1, 1) = 1e-30f;
  EXPECT_THROW(EditTrainer<float>::assert_frozen(a, b), FrozenParameterError);
  EXPECT_NO_THROW(EditTrainer<float>::assert_frozen(a, a));
}

TEST(Trainer, NonFiniteLossRollsBack) {
  test::SmallEditSetup s;
  TrainConfig c = test::small_train(2);
  c.clip.temperature = 0.0;
  const ParamStore<float> before = s.edit.params;
  EditTrainer<float> tr(*s.field, c, default_vocabulary());
  EXPECT_THROW(tr.train(), TrainingError);
  EXPECT_TRUE(test::bit_equal(before, s.edit.params));
}

TEST(Trainer, IdenticalSeedsGiveIdenticalLogs) {
  auto run = [] {
    test::SmallEditSetup s(5, true);
    EditTrainer<float> tr(*s.field, test::small_train(4), default_vocabulary());
    tr.train();
    std::string out;
    for (const auto& r : tr.log()) out += loss_csv_row(r) + "\n";
    return out;
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_FALSE(a.empty());
}

TEST(Trainer, MaskOnlyObjectiveFitsThePseudoLabel) {
  // Small generator fitted briefly to the two-blob scene.
  GeneratorConfig gc = test::small_generator();
  gc.synth.resolution = 12;
  gc.synth.channels = 6;
  gc.synth.input_channels = 8;
  gc.synth.hidden_channels = 8;
  auto gen = Generator<float>::create(gc, 11);
  Rng rng(12);
  const auto base = gen.synth.random_latent(rng);
  PretrainConfig pc;
  pc.steps = 300;
  pc.rays_per_step = 128;
  pc.samples = 16;
  pc.eval_samples = 16;
  pc.view_resolution = 12;
  pc.train_views = 8;
  pc.holdout_views = 1;
  pc.eval_every = 300;
  pc.oracle_steps = 256;
  pretrain_field(gen, two_blob_scene(), base, pc);

  EditModule<float> e = EditModule<float>::create(test::small_edit(), gc.synth, 13);
  EditedField<float> field(gen, base);
  field.push(e);
  TrainConfig c = test::small_train(500);
  c.weights = AfnWeights{1.0, 0.0, 0.0, 0.0};
  c.view_resolution = 12;
  c.label_resolution = 16;
  c.samples = 12;
  c.label_samples = 16;
  c.pool_views = 4;
  c.lr_final_fraction = 1.0;
  c.lr_afn = 3e-3;
  EditTrainer<float> tr(field, c, default_vocabulary());
  tr.train();
  const auto& log = tr.log();
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += log[static_cast<std::size_t>(i)].l_mask;
    last += log[log.size() - 1 - static_cast<std::size_t>(i)].l_mask;
  }
  EXPECT_LE(last, 0.5 * first);
}

TEST(GradCheck, SuitesPassForSeveralSeeds) {
  for (std::uint64_t seed : {2u, 3u})
    for (const auto& m : gradcheck_modules()) EXPECT_LT(run_gradcheck(m, seed).max_rel_error, 1e-6) << m << " " << seed;
  EXPECT_THROW(run_gradcheck("nope", 1), ConfigError);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A loss whose backward is deliberately off by a factor of two.
  auto r = gradient_check(
      [](ad::Tape<double>& t, const std::vector<ad::Var<double>>& v) {
        const int id = v[0].id();
        Mat<double> y(1, 1);
        y(0, 0) = v[0].value().squaredNorm();
        return t.push(y, "bad", true, [id](ad::Tape<double>& tp, int self) {
          tp.grad_acc(id) += 4.0 * tp.grad(self)(0, 0) * tp.value(id);
        });
      },
      {Mat<double>::Constant(1, 3, 0.5)});
  EXPECT_GT(r.max_rel_error, 0.4);
}
