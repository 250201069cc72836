#pragma once

#include <string>
#include <vector>

#include "lenerf/distill/relevance.hpp"
#include "lenerf/edit/edited_field.hpp"
#include "lenerf/guidance/losses.hpp"
#include "lenerf/train/gradcheck.hpp"
#include "lenerf/train/regularizers.hpp"

namespace lenerf {

// Small double-precision problems for finite-difference checks.

inline GeneratorConfig tiny_generator_config() {
  GeneratorConfig g;
  g.synth.resolution = 6;
  g.synth.channels = 4;
  g.synth.input_channels = 4;
  g.synth.hidden_channels = 4;
  g.synth.groups = 2;
  g.synth.group_dim = 3;
  g.synth.style_scale = 1.0;
  g.synth.latent_stddev = 1.0;
  g.decoder_hidden = 8;
  return g;
}

inline EditConfig tiny_edit_config() {
  EditConfig e;
  e.lrm_hidden = {5};
  e.afn_hidden = {6};
  e.dn_hidden = {6};
  e.afn_bias_init = -0.5;
  e.deformation = true;
  e.gamma_d = 0.1;
  return e;
}

/// One ray through the edited field with live LRM, DN and AFN. The loss is a
/// fixed random projection of the ray color plus its rendered mask.
struct RenderGradProblem {
  Generator<double> gen;
  EditModule<double> edit;
  LatentCode<double> base;
  RaySamples<double> samples;
  Mat<double> color_weights;

  static RenderGradProblem make(std::uint64_t seed, Index per_ray = 12) {
    RenderGradProblem p;
    const GeneratorConfig gc = tiny_generator_config();
    p.gen = Generator<double>::create(gc, seed);
    p.edit = EditModule<double>::create(tiny_edit_config(), gc.synth, seed + 1);
    Rng rng(mix_seed(seed, 0x6c));
    // Zero-initialised heads would hide most of the network from the check.
    for (auto& q : p.edit.params.all()) q.value += random_normal<double>(q.value.rows(), q.value.cols(), 0.2, rng);
    p.base = LatentCode<double>::random(gc.synth.groups, gc.synth.group_dim, rng);
    const CameraPose cam = orbit_pose(0.2, 0.1, 3.0, 0.8);
    const auto rays = generate_rays(cam, 3, 3, gc.synth.extent);
    p.samples = make_samples<double>({rays[4]}, per_ray, false, 0);
    p.color_weights = random_normal<double>(1, gc.synth.channels, 1.0, rng);
    return p;
  }

  ad::Var<double> loss(ad::Tape<double>& tape) {
    EditedField<double> field(gen, base);
    field.push(edit);
    EditedPoints<double> ep = field.evaluate(tape, tape.constant(samples.points), 0, true);
    auto dec = gen.decode(tape, ep.fused);
    TapedRender<double> r = composite(dec.features, dec.sigma, samples);
    ad::Var<double> c = ad::sum(ad::mul(r.pixels, tape.constant(color_weights)));
    return ad::add(c, ad::sum(ad::weighted_sum(r.weights, ep.mask)));
  }

  std::vector<Parameter<double>*> params(const std::string& prefix = "") {
    if (prefix.empty()) return edit.params.pointers();
    return edit.section(prefix);
  }
};

inline GradCheckResult check_render(std::uint64_t seed, const std::string& section = "", Index max_entries = 0) {
  RenderGradProblem p = RenderGradProblem::make(seed);
  return gradient_check_params([&](ad::Tape<double>& t) { return p.loss(t); }, p.params(section), 1e-3, max_entries);
}

inline GradCheckResult check_tv(std::uint64_t seed, Index g = 4) {
  Rng rng(mix_seed(seed, 0x7f));
  Mat<double> m(g * g * g, 1);
  for (Index i = 0; i < m.rows(); ++i) m(i, 0) = rng.uniform();
  return gradient_check([g](ad::Tape<double>&, const std::vector<ad::Var<double>>& v) { return tv_loss(v[0], g); },
                        {m}, {"m"});
}

inline GradCheckResult check_sparsity(std::uint64_t seed, Index n = 40, Index k = 4) {
  Rng rng(mix_seed(seed, 0x5b));
  Mat<double> m(n, 1);
  // Well-separated values keep the top/bottom sets fixed under the probe step.
  std::vector<double> vals;
  for (Index i = 0; i < n; ++i) vals.push_back(0.02 + 0.96 * double(i) / double(n - 1));
  for (Index i = n - 1; i > 0; --i) std::swap(vals[static_cast<std::size_t>(i)], vals[rng.below(static_cast<std::size_t>(i + 1))]);
  for (Index i = 0; i < n; ++i) m(i, 0) = vals[static_cast<std::size_t>(i)];
  return gradient_check(
      [k](ad::Tape<double>&, const std::vector<ad::Var<double>>& v) { return sparsity_loss(v[0], k); }, {m}, {"m"});
}

inline GradCheckResult check_clip(std::uint64_t seed, Index dim = 6) {
  Rng rng(mix_seed(seed, 0xc1));
  const Mat<double> q = random_normal<double>(1, dim, 1.0, rng);
  const Mat<double> pos = random_normal<double>(2, dim, 1.0, rng);
  const Mat<double> neg = random_normal<double>(3, dim, 1.0, rng);
  return gradient_check(
      [](ad::Tape<double>&, const std::vector<ad::Var<double>>& v) {
        return clip_contrastive_loss(v[0], v[1], v[2], 0.7);
      },
      {q, pos, neg}, {"q", "positives", "negatives"});
}

/// mask_loss of a rendered mask against a fixed label, through the AFN.
inline GradCheckResult check_mask(std::uint64_t seed, Index max_entries = 0) {
  RenderGradProblem p = RenderGradProblem::make(seed);
  Rng rng(mix_seed(seed, 0x3a));
  Mat<double> label(1, 1);
  label(0, 0) = rng.uniform();
  auto loss = [&](ad::Tape<double>& tape) {
    EditedField<double> field(p.gen, p.base);
    field.push(p.edit);
    EditedPoints<double> ep = field.evaluate(tape, tape.constant(p.samples.points), 0, true);
    auto dec = p.gen.decode(tape, ep.fused);
    TapedRender<double> r = composite(dec.features, dec.sigma, p.samples);
    return mask_loss(ad::weighted_sum(r.weights, ep.mask), label);
  };
  return gradient_check_params(loss, p.params("afn"), 1e-3, max_entries);
}

inline const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> m{"render", "lrm", "afn", "dn", "tv", "sparsity", "clip", "mask"};
  return m;
}

inline GradCheckResult run_gradcheck(const std::string& module, std::uint64_t seed) {
  if (module == "render") return check_render(seed);
  if (module == "lrm" || module == "afn" || module == "dn") return check_render(seed, module);
  if (module == "tv") return check_tv(seed);
  if (module == "sparsity") return check_sparsity(seed);
  if (module == "clip") return check_clip(seed);
  if (module == "mask") return check_mask(seed);
  std::string valid;
  for (const auto& m : gradcheck_modules()) valid += " " + m;
  throw ConfigError("unknown gradcheck module '" + module + "'; valid:" + valid);
}

}  // namespace lenerf
