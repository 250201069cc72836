#pragma once

#include "lenerf/harness/experiment.hpp"

namespace lenerf::test {

inline GeneratorConfig small_generator() {
  GeneratorConfig g;
  g.synth.resolution = 8;
  g.synth.channels = 4;
  g.synth.input_channels = 4;
  g.synth.hidden_channels = 4;
  g.synth.groups = 2;
  g.synth.group_dim = 4;
  g.synth.style_scale = 10.0;
  g.synth.latent_stddev = 0.1;
  g.decoder_hidden = 8;
  return g;
}

inline EditConfig small_edit(bool deform = false) {
  EditConfig e;
  e.lrm_hidden = {8};
  e.afn_hidden = {8};
  e.dn_hidden = {8};
  e.deformation = deform;
  return e;
}

/// Cheap training setup: 8x8 views, 8 samples, two pool views.
inline TrainConfig small_train(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.pool_views = 2;
  t.view_resolution = 8;
  t.samples = 8;
  t.label_resolution = 8;
  t.label_samples = 8;
  t.tv_grid = 4;
  t.label_interval = 2;
  return t;
}

/// Generator + latent + one edit, owned together so the field's pointers stay valid.
struct SmallEditSetup {
  Generator<float> gen;
  LatentCode<float> base;
  EditModule<float> edit;
  std::unique_ptr<EditedField<float>> field;

  explicit SmallEditSetup(std::uint64_t seed = 3, bool deform = false) {
    const GeneratorConfig gc = small_generator();
    gen = Generator<float>::create(gc, seed);
    Rng rng(seed + 10);
    base = gen.synth.random_latent(rng);
    edit = EditModule<float>::create(small_edit(deform), gc.synth, seed + 20);
    field = std::make_unique<EditedField<float>>(gen, base);
    field->push(edit);
  }
  SmallEditSetup(const SmallEditSetup&) = delete;
};

inline bool bit_equal(const ParamStore<float>& a, const ParamStore<float>& b) {
  if (a.all().size() != b.all().size()) return false;
  for (std::size_t i = 0; i < a.all().size(); ++i) {
    const auto& x = a.all()[i].value;
    const auto& y = b.all()[i].value;
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) return false;
  }
  return true;
}

}  // namespace lenerf::test
