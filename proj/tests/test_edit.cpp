#include <gtest/gtest.h>

#include <cmath>

#include "lenerf/train/gradcheck_suites.hpp"
#include "support.hpp"

using namespace lenerf;

namespace {

SynthesizerConfig synth_cfg() { return test::small_generator().synth; }

}  // namespace

TEST(Lrm, ZeroHeadsAreIdentity) {
  auto e = EditModule<double>::create(test::small_edit(), synth_cfg(), 1);
  Rng rng(2);
  const auto ws = LatentCode<double>::random(2, 4, rng);
  auto [dw, wt] = e.lrm.map_latent(ws, e.params);
  EXPECT_EQ(dw.groups.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(wt.groups, ws.groups);
  EXPECT_EQ(wt.space, LatentSpace::WStar);
}

TEST(Lrm, LinearIdentityHeadsDoubleTheLatent) {
  // One layer per head: M(w) = w I + 0.
  EditConfig c = test::small_edit();
  c.lrm_hidden = {};
  auto e = EditModule<double>::create(c, synth_cfg(), 1);
  for (Index n = 0; n < 2; ++n) e.params.at("lrm." + std::to_string(n) + ".w0").value = Mat<double>::Identity(4, 4);
  Rng rng(2);
  const auto ws = LatentCode<double>::random(2, 4, rng);
  EXPECT_NEAR((e.lrm.map_latent(ws, e.params).second.groups - 2 * ws.groups).norm(), 0.0, 1e-15);
}

TEST(Lrm, RandomHeadsMatchRecomputation) {
  EditConfig c = test::small_edit();
  c.lrm_hidden = {3};
  auto e = EditModule<double>::create(c, synth_cfg(), 1);
  Rng rng(5);
  for (auto& p : e.section("lrm")) p->value = random_normal<double>(p->value.rows(), p->value.cols(), 0.5, rng);
  const auto ws = LatentCode<double>::random(2, 4, rng);
  double sq = 0;
  for (Index n = 0; n < 2; ++n) {
    const std::string b = "lrm." + std::to_string(n);
    Mat<double> h = ws.groups.row(n) * e.params.at(b + ".w0").value + e.params.at(b + ".b0").value;
    h = h.unaryExpr([](double x) { return std::log1p(std::exp(x)); });
    const Mat<double> d = h * e.params.at(b + ".w1").value + e.params.at(b + ".b1").value;
    sq += d.squaredNorm();
  }
  const auto dw = e.lrm.map_latent(ws, e.params).first;
  EXPECT_NEAR(dw.groups.norm(), std::sqrt(sq), 1e-13);
}

TEST(Dn, IdentityAtInitAndWithGateOff) {
  auto e = EditModule<double>::create(test::small_edit(true), synth_cfg(), 1);
  Rng rng(3);
  const Mat<double> x = random_normal<double>(5, 3, 0.5, rng);
  const Mat<double> cond = random_normal<double>(1, 16, 0.1, rng);
  ad::Tape<double> t;
  EXPECT_EQ(e.dn.forward(t, e.params, t.constant(x), t.constant(cond)).value(), x);
  for (auto& p : e.section("dn")) p->value = random_normal<double>(p->value.rows(), p->value.cols(), 1.0, rng);
  const Mat<double> moved = e.dn.forward(t, e.params, t.constant(x), t.constant(cond)).value();
  EXPECT_GT((moved - x).norm(), 0.0);
  EXPECT_LE((moved - x).cwiseAbs().maxCoeff(), 0.1);
  e.dn.set_gamma(0.0);
  EXPECT_EQ(e.dn.forward(t, e.params, t.constant(x), t.constant(cond)).value(), x);
}

TEST(Afn, BiasSaturatesTheMask) {
  Rng rng(4);
  const Mat<double> f = random_normal<double>(6, 4, 1.0, rng), x = random_normal<double>(6, 3, 0.5, rng);
  const Mat<double> cond = random_normal<double>(1, 16, 0.1, rng);
  auto mask_with_bias = [&](double b) {
    EditConfig c = test::small_edit();
    c.afn_bias_init = b;
    auto e = EditModule<double>::create(c, synth_cfg(), 1);
    // Shrink the hidden path so the bias dominates.
    e.params.at("afn.w1").value *= 1e-3;
    ad::Tape<double> t;
    return e.afn.forward(t, e.params, t.constant(f), t.constant(x), t.constant(f), t.constant(x), t.constant(cond)).value();
  };
  EXPECT_LT(mask_with_bias(-10).maxCoeff(), 1e-4);
  EXPECT_GT(mask_with_bias(10).minCoeff(), 1 - 1e-4);
  auto e = EditModule<double>::create(test::small_edit(), synth_cfg(), 1);
  for (auto& p : e.section("afn")) p->value.setZero();
  ad::Tape<double> t;
  auto m = e.afn.forward(t, e.params, t.constant(f), t.constant(x), t.constant(f), t.constant(x), t.constant(cond));
  EXPECT_EQ(m.value(), Mat<double>::Constant(6, 1, 0.5));
}

TEST(Fuse, Examples) {
  Eigen::RowVectorXd fs(2), ft(2);
  fs << 1, 0;
  ft << 0, 1;
  EXPECT_EQ(fuse<double>(fs, ft, 0.0), fs);
  EXPECT_EQ(fuse<double>(fs, ft, 1.0), ft);
  EXPECT_EQ(fuse<double>(fs, ft, 0.5), Eigen::RowVectorXd::Constant(2, 0.5));
  EXPECT_THROW(fuse<double>(fs, ft, 1.5), ContractError);
}

TEST(Fuse, ConvexChannelwise) {
  Rng rng(8);
  ad::Tape<double> t;
  const Mat<double> a = random_normal<double>(10, 3, 1.0, rng), b = random_normal<double>(10, 3, 1.0, rng);
  Mat<double> m(10, 1);
  for (Index i = 0; i < 10; ++i) m(i, 0) = rng.uniform();
  const Mat<double> f = fuse(t.constant(a), t.constant(b), t.constant(m)).value();
  EXPECT_TRUE((f.array() >= a.cwiseMin(b).array() - 1e-15).all());
  EXPECT_TRUE((f.array() <= a.cwiseMax(b).array() + 1e-15).all());
}

TEST(EditedField, PassthroughAtBiasMinusTen) {
  const GeneratorConfig gc = test::small_generator();
  auto gen = Generator<double>::create(gc, 4);
  Rng rng(5);
  const auto base = gen.synth.random_latent(rng);
  EditConfig c = test::small_edit();
  c.afn_bias_init = -10;
  auto e = EditModule<double>::create(c, gc.synth, 6);
  EditedField<double> field(gen, base);
  field.push(e);
  const CameraPose cam = orbit_pose(0.3, -0.1, 3.0, 0.8);
  auto src = render_edit(field, -1, cam, 6, 6, 16);
  auto ed = render_edit(field, 0, cam, 6, 6, 16);
  EXPECT_LT((src.rgb.pixels - ed.rgb.pixels).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(EditedField, BiasPlusTenMatchesTarget) {
  const GeneratorConfig gc = test::small_generator();
  auto gen = Generator<double>::create(gc, 4);
  Rng rng(5);
  const auto base = gen.synth.random_latent(rng);
  EditConfig c = test::small_edit();
  c.afn_bias_init = 10;
  auto e = EditModule<double>::create(c, gc.synth, 6);
  // A nonzero latent residual so source and target differ.
  e.params.at("lrm.0.b1").value.setConstant(0.1);
  EditedField<double> field(gen, base);
  field.push(e);
  auto r = render_edit(field, 0, orbit_pose(0, 0, 3.0, 0.8), 6, 6, 16, true);
  EXPECT_LT((r.rgb.pixels - r.target_rgb.pixels).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(EditedField, RenderGradientsMatchFiniteDifferences) {
  for (const char* section : {"lrm", "afn", "dn"}) {
    const auto r = check_render(1, section);
    EXPECT_LT(r.max_rel_error, 1e-6) << section << " worst " << r.worst;
  }
}

TEST(EditedField, ForceMaskOneUsesTarget) {
  test::SmallEditSetup s;
  s.edit.force_mask_one = true;
  s.field->refresh();
  auto r = render_edit(*s.field, 0, orbit_pose(0, 0, 3.0, 0.8), 4, 4, 8, true);
  EXPECT_EQ(r.rgb.pixels, r.target_rgb.pixels);
}
