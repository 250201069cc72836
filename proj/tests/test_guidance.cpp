#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lenerf/guidance/losses.hpp"
#include "lenerf/guidance/encoders.hpp"
#include "lenerf/train/gradcheck_suites.hpp"

using namespace lenerf;

namespace {

Image<double> gradient_image(Index h, Index w) {
  Mat<double> px(h * w, 3);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < w; ++j) px.row(i * w + j) << double(j) / double(w), double(i) / double(h), 0.5;
  return Image<double>(h, w, px);
}

Image<double> solid(Index h, Index w, double r, double g, double b) {
  Mat<double> px(h * w, 3);
  px.rowwise() = Eigen::RowVector3d(r, g, b);
  return Image<double>(h, w, px);
}

std::vector<VocabEntry> axis_vocab() {
  std::istringstream s("a | axis | 0\nb | axis | 1\nc | axis | 2\nd | axis | 3\n");
  return parse_vocabulary(s);
}

}  // namespace

TEST(Augment, DisabledIsIdentity) {
  AugmentConfig c;
  c.enabled = false;
  const auto img = gradient_image(8, 8);
  EXPECT_EQ(augment(img, c, 7).pixels, img.pixels);
}

TEST(Augment, ConstantImageStaysConstant) {
  const auto img = solid(8, 8, 0.2, 0.4, 0.6);
  for (std::uint64_t seed : {1u, 7u, 99u}) EXPECT_NEAR((augment(img, AugmentConfig{}, seed).pixels - img.pixels).norm(), 0.0, 1e-12);
}

// Frozen from the implementation; guards against silent changes to the crop/flip draws.
TEST(Augment, SeedSevenGolden) {
  const auto out = augment(gradient_image(8, 8), AugmentConfig{}, 7);
  EXPECT_NEAR(out.pixels.col(0).sum(), 29.144211813884322, 1e-9);
  EXPECT_NEAR(out.at(2, 3, 0), 0.51467101572009955, 1e-9);
}

TEST(DirectionSets, SameSourceAndEditPromptGivesZeroSecondPositive) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 16, 16);
  const Mat<double> es = enc.embed_image(solid(16, 16, 0.3, 0.3, 0.8));
  auto d = direction_sets<double>("red", "red", es, enc, {"green", "blue"});
  EXPECT_EQ(d.positives.row(1).norm(), 0.0);
  EXPECT_EQ(d.negatives.rows(), 2);
}

TEST(DirectionSets, OrthonormalPromptsHandDotProducts) {
  SyntheticOracleEncoder<double> enc(axis_vocab(), 16, 16);
  // E_T(a) = e0, E_T(b) = e1, source embedding e2: S+ = {e0 - e2, e0 - e1}.
  const Mat<double> es = enc.embed_text("c");
  auto d = direction_sets<double>("a", "b", es, enc, {"d"});
  EXPECT_DOUBLE_EQ(d.positives.row(0).dot(d.positives.row(1)), 1.0);
  EXPECT_DOUBLE_EQ(d.positives.row(0).squaredNorm(), 2.0);
  EXPECT_DOUBLE_EQ(d.negatives.row(0).dot(d.positives.row(0)), 1.0);
}

TEST(DirectionSets, UnknownPromptThrows) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 16, 16);
  EXPECT_THROW(enc.embed_text("a zebra"), VocabularyError);
}

TEST(ClipLoss, EmptyNegativesIsExactlyZero) {
  DirectionSets<double> d;
  d.positives = Mat<double>::Random(2, 4);
  d.negatives.resize(0, 4);
  EXPECT_EQ(clip_contrastive_value<double>(Mat<double>::Random(1, 4), d), 0.0);
}

TEST(ClipLoss, SymmetricIsLnTwo) {
  DirectionSets<double> d;
  d.positives = Mat<double>(1, 2);
  d.positives << 1, 0;
  d.negatives = Mat<double>(1, 2);
  d.negatives << 0, 1;
  Mat<double> q(1, 2);
  q << 0.7, 0.7;
  EXPECT_NEAR(clip_contrastive_value(q, d), std::log(2.0), 1e-12);
}

TEST(ClipLoss, TwoVersusZeroLogits) {
  DirectionSets<double> d;
  d.positives = Mat<double>(1, 2);
  d.positives << 2, 0;
  d.negatives = Mat<double>(1, 2);
  d.negatives << 0, 1;
  Mat<double> q(1, 2);
  q << 1, 0;
  EXPECT_NEAR(clip_contrastive_value(q, d), -std::log(std::exp(2.0) / (std::exp(2.0) + 1)), 1e-12);
  EXPECT_NEAR(clip_contrastive_value(q, d), 0.1269, 5e-5);
}

TEST(ClipLoss, ShiftInvariant) {
  Rng rng(3);
  // A constant c added to every logit: append a coordinate where q is 1 and
  // every direction is c.
  const Mat<double> q = random_normal<double>(1, 4, 1.0, rng);
  DirectionSets<double> d{random_normal<double>(2, 4, 1.0, rng), random_normal<double>(3, 4, 1.0, rng)};
  DirectionSets<double> s = d;
  Mat<double> q2(1, 5);
  q2 << q, 1.0;
  s.positives.conservativeResize(2, 5);
  s.negatives.conservativeResize(3, 5);
  s.positives.col(4).setConstant(5.5);
  s.negatives.col(4).setConstant(5.5);
  EXPECT_NEAR(clip_contrastive_value(q, d), clip_contrastive_value(q2, s), 1e-9);
}

TEST(ClipLoss, MonotoneInPositiveLogit) {
  Rng rng(4);
  const Mat<double> q = random_normal<double>(1, 3, 1.0, rng);
  DirectionSets<double> d{random_normal<double>(2, 3, 1.0, rng), random_normal<double>(2, 3, 1.0, rng)};
  DirectionSets<double> up = d;
  up.positives.row(1) += 0.01 * q / q.squaredNorm();
  EXPECT_LT(clip_contrastive_value(q, up), clip_contrastive_value(q, d));
}

TEST(ClipLoss, GradientMatchesFiniteDifferences) {
  EXPECT_LT(check_clip(1).max_rel_error, 1e-6);
}

TEST(IdentityLoss, Examples) {
  const auto img = gradient_image(16, 16);
  EXPECT_NEAR(identity_loss_value(img, img), 0.0, 1e-15);
  Image<double> inv = img;
  inv.pixels = Mat<double>::Ones(img.pixels.rows(), 3) - img.pixels;
  EXPECT_GT(identity_loss_value(img, inv), 0.0);
  EXPECT_NEAR(identity_loss_value(img, solid(16, 16, 0.9, 0.1, 0.4)), 0.07135542694625552, 1e-12);
}

TEST(ClipPlus, ZeroWhenNothingChanges) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 16, 16);
  ad::Tape<double> t;
  auto img = t.constant(gradient_image(16, 16).pixels);
  ClipPlusConfig cfg;
  cfg.augment.enabled = false;
  auto r = clip_plus_loss(img, img, t.constant(Mat<double>::Zero(1, 8)), ClipPrompts{"red", "blue", {}}, cfg, enc, 1);
  EXPECT_EQ(r.total.scalar(), 0.0);
}

TEST(ClipPlus, L2TermArithmetic) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 16, 16);
  ad::Tape<double> t;
  auto img = t.constant(gradient_image(16, 16).pixels);
  ClipPlusConfig cfg;
  cfg.augment.enabled = false;
  cfg.lambda_l2 = 1.0;
  Mat<double> dw = Mat<double>::Zero(1, 4);
  dw << 1, 2, 2, 0;
  auto r = clip_plus_loss(img, img, t.constant(dw), ClipPrompts{"red", "blue", {}}, cfg, enc, 1);
  EXPECT_DOUBLE_EQ(r.total.scalar(), 3.0);
}

TEST(ClipPlus, PixelGradientMatchesFiniteDifferences) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 16, 16);
  const auto src = gradient_image(16, 16);
  Rng rng(2);
  Mat<double> ed = src.pixels + random_normal<double>(256, 3, 0.05, rng);
  ClipPlusConfig cfg;
  cfg.augment.enabled = false;
  auto g = gradient_check(
      [&](ad::Tape<double>& t, const std::vector<ad::Var<double>>& v) {
        return clip_plus_loss(t.constant(src.pixels), v[0], t.constant(Mat<double>::Ones(1, 4)),
                              ClipPrompts{"red left blob", "two blobs", {"blue left blob", "green right blob"}}, cfg,
                              enc, 1)
            .total;
      },
      {ed}, {"pixels"}, 1e-3, 64);
  EXPECT_LT(g.max_rel_error, 1e-5);
}

TEST(OracleEncoder, ColorStatistics) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 32, 32);
  const Mat<double> red = enc.embed_text("red");
  EXPECT_NEAR(enc.embed_image(solid(32, 32, 1, 0, 0)).row(0).dot(red.row(0)), 1.0, 1e-6);
  EXPECT_LE(enc.embed_image(solid(32, 32, 0, 0, 1)).row(0).dot(red.row(0)), 0.0);
  const Mat<double> black = enc.embed_image(solid(32, 32, 0, 0, 0));
  EXPECT_NEAR((black - Mat<double>::Constant(1, 6, 1 / std::sqrt(6.0))).norm(), 0.0, 1e-12);
}

TEST(OracleEncoder, LeftAndRightSlots) {
  SyntheticOracleEncoder<double> enc(default_vocabulary(), 32, 32);
  Image<double> img = solid(32, 32, 0, 0, 0);
  for (Index i = 0; i < 32; ++i)
    for (Index j = 0; j < 16; ++j) img.at(i, j, 0) = 1.0;
  const Mat<double> e = enc.embed_image(img);
  EXPECT_GT(e.row(0).dot(enc.embed_text("red left blob").row(0)), 0.9);
  EXPECT_LT(e.row(0).dot(enc.embed_text("magenta right blob").row(0)), 0.5);
}

TEST(Vocabulary, ParseErrors) {
  std::istringstream bad("red | middle | 1 0 0\n");
  EXPECT_THROW(parse_vocabulary(bad), ConfigError);
  EXPECT_THROW(make_encoder<double>("clip", default_vocabulary(), 16, 16, 4, 1), ConfigError);
}
