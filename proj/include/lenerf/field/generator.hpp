#pragma once

#include <string>

#include "lenerf/field/decoder.hpp"
#include "lenerf/field/synthesizer.hpp"
#include "lenerf/render/upsample.hpp"
#include "lenerf/render/volume.hpp"

namespace lenerf {

struct GeneratorConfig {
  SynthesizerConfig synth;
  Index decoder_hidden = 64;
};

/// Rendered view: feature image at H_V x W_V, its RGB upsampled to H x W and
/// the per-pixel accumulated opacity.
template <class T>
struct ViewRender {
  Image<T> features;
  Image<T> rgb;
  Image<T> opacity;
};

/// The frozen-at-edit-time part of the pipeline: plane synthesizer, feature
/// decoder and upsampler, with all their tensors in one store.
template <class T>
struct Generator {
  GeneratorConfig config;
  Synthesizer<T> synth;
  Decoder<T> decoder;
  Upsampler<T> upsampler;
  ParamStore<T> params;

  static Generator create(const GeneratorConfig& cfg, std::uint64_t seed) {
    Generator g;
    g.config = cfg;
    g.synth = Synthesizer<T>(cfg.synth);
    Rng rng(seed);
    g.synth.init_params(g.params, rng);
    g.decoder = Decoder<T>(g.params, cfg.synth.channels, cfg.decoder_hidden, rng);
    g.upsampler = Upsampler<T>(cfg.synth.channels);
    g.upsampler.init_params(g.params);
    return g;
  }

  T extent() const { return static_cast<T>(config.synth.extent); }
  Index resolution() const { return config.synth.resolution; }

  template <class U>
  Generator<U> cast() const {
    Generator<U> g;
    g.config = config;
    g.synth = Synthesizer<U>(config.synth);
    Rng rng(0);
    ParamStore<U> scratch;
    g.decoder = Decoder<U>(scratch, config.synth.channels, config.decoder_hidden, rng);
    g.upsampler = Upsampler<U>(config.synth.channels);
    g.params = params.template cast<U>();
    return g;
  }

  ad::Var<T> planes(ad::Tape<T>& tape, const ad::Var<T>& latent_flat) { return synth.forward(tape, params, latent_flat); }

  ad::Var<T> sample(const ad::Var<T>& planes, const ad::Var<T>& points) const {
    return ad::triplane_sample(planes, points, resolution(), extent());
  }

  typename Decoder<T>::Output decode(ad::Tape<T>& tape, const ad::Var<T>& features) {
    return decoder.forward(tape, params, features);
  }
};

/// Renders a field given a per-chunk evaluator (points -> decoded output) in
/// ray chunks without keeping gradients. `eval` receives a tape and the point
/// constant, returns {features, sigma}.
template <class T, class Eval>
Image<T> render_feature_image(const std::vector<Ray>& rays, Index h, Index w, Index per_ray, bool stratified,
                              std::uint64_t seed, Eval&& eval, Image<T>* opacity = nullptr, Index chunk = 256) {
  const Index n = static_cast<Index>(rays.size());
  if (n != h * w) throw ConfigError("render_feature_image: ray count does not match image size");
  Mat<T> px;
  Mat<T> op(n, 1);
  for (Index start = 0; start < n; start += chunk) {
    const Index cnt = std::min(chunk, n - start);
    std::vector<Ray> part(rays.begin() + start, rays.begin() + start + cnt);
    RaySamples<T> s = make_samples<T>(part, per_ray, stratified, mix_seed(seed, static_cast<std::uint64_t>(start)));
    ad::Tape<T> tape;
    tape.set_grad_enabled(false);
    auto [feat, sigma] = eval(tape, tape.constant(s.points));
    TapedRender<T> r = composite(feat, sigma, s);
    if (px.size() == 0) px.resize(n, feat.cols());
    px.middleRows(start, cnt) = r.pixels.value();
    op.middleRows(start, cnt) = r.weights.value().rowwise().sum();
  }
  if (opacity) *opacity = Image<T>(h, w, std::move(op));
  return Image<T>(h, w, std::move(px));
}

/// Source render of a latent: feature image, RGB after upsampling, opacity.
template <class T>
ViewRender<T> render_view(Generator<T>& gen, const LatentCode<T>& w, const CameraPose& cam, Index h, Index wd,
                          Index per_ray, bool stratified = false, std::uint64_t seed = 0) {
  const auto rays = generate_rays(cam, h, wd, gen.config.synth.extent);
  const TriPlaneSet<T> planes = gen.synth.synthesize(w, gen.params);
  ViewRender<T> out;
  out.features = render_feature_image<T>(
      rays, h, wd, per_ray, stratified, seed,
      [&](ad::Tape<T>& tape, const ad::Var<T>& pts) {
        auto pl = tape.constant(planes.data);
        auto dec = gen.decode(tape, gen.sample(pl, pts));
        return std::make_pair(dec.features, dec.sigma);
      },
      &out.opacity);
  out.rgb = gen.upsampler.apply(gen.params, out.features);
  return out;
}

/// First three channels of a feature image.
template <class T>
Image<T> rgb_of(const Image<T>& features) {
  return Image<T>(features.height, features.width, features.pixels.leftCols(3));
}

}  // namespace lenerf
