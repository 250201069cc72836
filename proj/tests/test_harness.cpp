#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "support.hpp"

using namespace lenerf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lenerf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Image<double> binary(Index h, Index w, std::initializer_list<Index> ones) {
  Mat<double> px = Mat<double>::Zero(h * w, 1);
  for (Index i : ones) px(i, 0) = 1.0;
  return Image<double>(h, w, px);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  Checkpoint c;
  c.meta["note"] = "two words";
  Rng rng(1);
  Mat<float> a = random_normal<float>(3, 5, 1.0, rng);
  a(0, 0) = -0.0f;
  a(1, 1) = 1e-40f;  // subnormal
  c.put("lrm.w0", a);
  c.put<float>("afn.b0", Mat<float>::Constant(1, 4, 3.25f));
  std::stringstream ss;
  save_checkpoint(ss, c);
  const Checkpoint d = load_checkpoint(ss);
  EXPECT_EQ(d.meta.at("note"), "two words");
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(std::memcmp(d.get("lrm.w0").data(), a.data(), sizeof(float) * 15), 0);
  EXPECT_TRUE(d.has_section("afn"));
  EXPECT_FALSE(d.has_section("dn"));
}

TEST(Checkpoint, RejectsBadInput) {
  std::stringstream v2("LENERF-CKPT 2\nend\n");
  EXPECT_THROW(load_checkpoint(v2), CheckpointError);
  std::stringstream magic("NOPE 1\nend\n");
  EXPECT_THROW(load_checkpoint(magic), CheckpointError);
  std::stringstream trunc("LENERF-CKPT 1\ntensor a a.x 2 2 0\nend\nabc");
  EXPECT_THROW(load_checkpoint(trunc), CheckpointError);
  std::stringstream order("LENERF-CKPT 1\ntensor a a.x 1 1 4\nend\n");
  EXPECT_THROW(load_checkpoint(order), CheckpointError);
}

TEST(Checkpoint, LoadIntoChecksShapes) {
  ParamStore<float> s;
  s.add("lrm.w0", Mat<float>::Zero(2, 2));
  Checkpoint c;
  c.put<float>("lrm.w0", Mat<float>::Zero(3, 2));
  EXPECT_THROW(c.load_into(s), CheckpointError);
}

TEST(Checkpoint, GeneratorAndEditChainRoundTrip) {
  const fs::path dir = scratch_dir("chain");
  RunConfig cfg;
  cfg.generator = test::small_generator();
  cfg.edit = test::small_edit();
  test::SmallEditSetup s;
  save_generator((dir / "g.ckpt").string(), s.gen, s.base, cfg);
  Rng rng(4);
  for (auto& p : s.edit.params.all()) p.value += random_normal<float>(p.value.rows(), p.value.cols(), 0.1, rng);
  s.field->refresh();
  cfg.train.t_mask = "right blob";
  save_edit((dir / "e1.ckpt").string(), s.edit, cfg, (dir / "g.ckpt").string(), "");
  save_edit((dir / "e2.ckpt").string(), s.edit, cfg, (dir / "g.ckpt").string(), (dir / "e1.ckpt").string());
  auto chain = load_chain<float>((dir / "e2.ckpt").string());
  ASSERT_EQ(chain->edits.size(), 2u);
  EXPECT_TRUE(test::bit_equal(chain->generator.gen.params, s.gen.params));
  EXPECT_TRUE(test::bit_equal(chain->edits[0].params, s.edit.params));
  EXPECT_EQ(chain->edit_configs[1].train.t_mask, "right blob");
  EXPECT_EQ(chain->generator.gen.config.synth.style_scale, cfg.generator.synth.style_scale);
  EXPECT_EQ(chain->field->top(), 1);
  EXPECT_THROW(load_chain<float>((dir / "g.ckpt").string()), CheckpointError);
  auto src = load_any<float>((dir / "g.ckpt").string());
  EXPECT_EQ(src->field->top(), -1);
}

TEST(Config, UnknownKeyListsValidKeys) {
  RunConfig c;
  try {
    apply_override(c, "train.lambda_foo=1");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.lambda_foo"), std::string::npos);
    EXPECT_NE(msg.find("train.lambda_tv"), std::string::npos);
    EXPECT_NE(msg.find("prompt.t_mask"), std::string::npos);
  }
}

TEST(Config, EveryTrainKeyIsAddressable) {
  RunConfig c;
  apply_override(c, "train.lambda_tv=0.25");
  apply_override(c, "prompt.distractors=green, blue");
  apply_override(c, "edit.afn_hidden=3,4");
  EXPECT_EQ(c.train.weights.tv, 0.25);
  EXPECT_EQ(c.train.prompts.distractors, (std::vector<std::string>{"green", "blue"}));
  EXPECT_EQ(c.edit.afn_hidden, (std::vector<Index>{3, 4}));
  EXPECT_THROW(apply_override(c, "train.steps=many"), ConfigError);
  EXPECT_THROW(apply_override(c, "edit.deformation=maybe"), ConfigError);
  EXPECT_THROW(apply_override(c, "novalue"), ConfigError);
}

TEST(Config, IniRoundTrip) {
  RunConfig a;
  apply_override(a, "seed=9");
  apply_override(a, "eval.views=0:0 0.5:-0.25");
  apply_override(a, "train.lr_afn=0.0025");
  std::istringstream in(to_ini(a));
  RunConfig b;
  apply_ini(b, in);
  EXPECT_EQ(to_ini(a), to_ini(b));
  EXPECT_EQ(b.eval.views.size(), 2u);
  EXPECT_EQ(b.seed, 9u);
  std::istringstream bad("[train]\nlambda_mask 1\n");
  EXPECT_THROW(apply_ini(b, bad), ConfigError);
}

TEST(Metrics, MaskedPsnrExamples) {
  const Image<double> a = Image<double>::constant(4, 4, 3, 0.5);
  const Image<double> none = binary(4, 4, {});
  EXPECT_EQ(masked_psnr(a, a, none), kPsnrCap);
  Image<double> b = a;
  b.pixels.array() += 0.1;
  EXPECT_NEAR(masked_psnr(a, b, none), 20.0, 1e-9);
  // Errors inside the region are ignored.
  Image<double> c = a;
  c.at(0, 0, 1) = 1.0;
  EXPECT_EQ(masked_psnr(a, c, binary(4, 4, {0})), kPsnrCap);
  Image<double> all = Image<double>::constant(4, 4, 1, 1.0);
  EXPECT_EQ(masked_psnr(a, b, all), kPsnrCap);
  Image<double> soft = none;
  soft.pixels(3, 0) = 0.5;
  EXPECT_THROW(masked_psnr(a, b, soft), InputError);
  EXPECT_THROW(masked_psnr(a, Image<double>::constant(2, 2, 3, 0.0), none), InputError);
}

TEST(Metrics, IouExamples) {
  const Image<double> m = binary(3, 3, {0, 1, 4});
  EXPECT_EQ(mask_iou(m, m), 1.0);
  EXPECT_EQ(mask_iou(m, binary(3, 3, {7, 8})), 0.0);
  EXPECT_DOUBLE_EQ(mask_iou(m, binary(3, 3, {0, 1, 2})), 0.5);
}

TEST(Metrics, ReportFormats) {
  MetricsReport r;
  r.views.push_back({0.1, 0.2, 31.5, 0.9, 0.2});
  r.masked_psnr_outside = 31.5;
  r.mask_iou = 0.9;
  EXPECT_NE(r.csv().find("view,azimuth,elevation,masked_psnr_outside,mask_iou,delta_red"), std::string::npos);
  EXPECT_NE(r.summary().find("mask_iou: 0.9000"), std::string::npos);
}

TEST(Pipeline, RegionBlobsFollowTheVocabulary) {
  const auto scene = two_blob_scene();
  EXPECT_EQ(region_blobs(default_vocabulary(), "left blob", scene), std::vector<int>{0});
  EXPECT_EQ(region_blobs(default_vocabulary(), "right blob", scene), std::vector<int>{1});
  EXPECT_EQ(region_blobs(default_vocabulary(), "two blobs", scene), (std::vector<int>{0, 1}));
  EXPECT_THROW(region_blobs(default_vocabulary(), "zebra", scene), VocabularyError);
}

TEST(ShippedConfigs, MatchTheBuiltIns) {
  const std::string dir = LENERF_CONFIG_DIR;
  RunConfig from_file, defaults;
  load_ini(from_file, dir + "/default.ini");
  EXPECT_EQ(to_ini(from_file), to_ini(defaults));
  const auto scene = load_scene(dir + "/two_blob.scene"), builtin = two_blob_scene();
  ASSERT_EQ(scene.blobs.size(), builtin.blobs.size());
  for (std::size_t i = 0; i < scene.blobs.size(); ++i) {
    EXPECT_EQ(scene.blobs[i].name, builtin.blobs[i].name);
    EXPECT_EQ(scene.blobs[i].center, builtin.blobs[i].center);
    EXPECT_EQ(scene.blobs[i].color, builtin.blobs[i].color);
    EXPECT_EQ(scene.blobs[i].radius, builtin.blobs[i].radius);
  }
  const auto vocab = load_vocabulary(dir + "/vocab.txt"), dv = default_vocabulary();
  ASSERT_EQ(vocab.size(), dv.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) EXPECT_EQ(vocab[i].prompt, dv[i].prompt);
}
