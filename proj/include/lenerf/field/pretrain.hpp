#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lenerf/core/adam.hpp"
#include "lenerf/field/generator.hpp"
#include "lenerf/render/oracle.hpp"

namespace lenerf {

struct PretrainConfig {
  int steps = 2000;
  Index rays_per_step = 512;
  Index samples = 32;          // stratified, per ray
  Index eval_samples = 48;     // midpoint, held-out views
  Index view_resolution = 32;
  int train_views = 24;
  int holdout_views = 4;
  int eval_every = 250;
  double lr = 1e-2;
  double lr_final = 1e-3;      // exponential decay towards this
  int oracle_steps = 4096;
  std::uint64_t seed = 1;
  PoseDistribution poses;
};

struct PretrainLogEntry {
  int step = 0;
  double train_loss = 0;
  double holdout_mse = 0;
  double holdout_psnr = 0;
};

struct PretrainResult {
  std::vector<PretrainLogEntry> log;
  double final_psnr = 0;
};

inline double psnr_from_mse(double mse, double cap = 99.0) {
  if (mse <= 0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

template <class T>
struct ViewTarget {
  CameraPose pose;
  std::vector<Ray> rays;
  Mat<T> rgb;  // oracle, rays x 3
};

template <class T>
std::vector<ViewTarget<T>> oracle_views(const AnalyticSceneSpec& scene, const PoseDistribution& poses, int count,
                                        Index res, int steps, Rng& rng) {
  std::vector<ViewTarget<T>> out;
  for (int v = 0; v < count; ++v) {
    ViewTarget<T> t;
    t.pose = poses.sample(rng);
    t.rays = generate_rays(t.pose, res, res, scene.extent);
    t.rgb.resize(static_cast<Index>(t.rays.size()), 3);
    for (std::size_t r = 0; r < t.rays.size(); ++r)
      t.rgb.row(static_cast<Index>(r)) = oracle_render(scene, t.rays[r], steps).template cast<T>().transpose();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

/// Mean squared RGB error of the field's feature image against oracle renders.
template <class T>
double field_mse(Generator<T>& gen, const LatentCode<T>& w, const std::vector<detail::ViewTarget<T>>& views,
                 Index samples) {
  const TriPlaneSet<T> planes = gen.synth.synthesize(w, gen.params);
  double sq = 0;
  Index n = 0;
  for (const auto& v : views) {
    const Index res = static_cast<Index>(std::lround(std::sqrt(double(v.rays.size()))));
    Image<T> img = render_feature_image<T>(v.rays, res, res, samples, false, 0, [&](ad::Tape<T>& tape, const ad::Var<T>& pts) {
      auto dec = gen.decode(tape, gen.sample(tape.constant(planes.data), pts));
      return std::make_pair(dec.features, dec.sigma);
    });
    sq += (img.pixels.leftCols(3).template cast<double>() - v.rgb.template cast<double>()).squaredNorm();
    n += v.rgb.size();
  }
  return sq / static_cast<double>(n);
}

/// Fits the synthesizer and decoder so the field rendered at latent `w`
/// reproduces the analytic scene. The upsampler is left at its identity
/// initialisation. If the loss turns non-finite, parameters are restored to
/// the last evaluated checkpoint and TrainingError is thrown.
template <class T>
PretrainResult pretrain_field(Generator<T>& gen, const AnalyticSceneSpec& scene, const LatentCode<T>& w,
                              const PretrainConfig& cfg,
                              const std::function<void(const PretrainLogEntry&)>& on_log = nullptr) {
  Rng rng(mix_seed(cfg.seed, 0x9e7));
  const auto train = detail::oracle_views<T>(scene, cfg.poses, cfg.train_views, cfg.view_resolution, cfg.oracle_steps, rng);
  const auto holdout =
      detail::oracle_views<T>(scene, cfg.poses, cfg.holdout_views, cfg.view_resolution, cfg.oracle_steps, rng);

  std::vector<Parameter<T>*> trainable;
  for (auto& p : gen.params.all())
    if (p.name.rfind("synth.", 0) == 0 || p.name.rfind("decoder.", 0) == 0) trainable.push_back(&p);
  Adam<T> opt(trainable, cfg.lr);
  ParamStore<T> last_good = gen.params;

  PretrainResult result;
  auto evaluate = [&](int step, double train_loss) {
    PretrainLogEntry e;
    e.step = step;
    e.train_loss = train_loss;
    e.holdout_mse = field_mse(gen, w, holdout, cfg.eval_samples);
    e.holdout_psnr = psnr_from_mse(e.holdout_mse);
    result.log.push_back(e);
    if (on_log) on_log(e);
    last_good = gen.params;
  };
  evaluate(0, std::nan(""));

  const Index per_view = static_cast<Index>(train[0].rays.size());
  const Ray none{};
  double running = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const double frac = cfg.steps > 1 ? double(step - 1) / double(cfg.steps - 1) : 1.0;
    opt.set_lr(cfg.lr * std::pow(cfg.lr_final / cfg.lr, frac));
    std::vector<Ray> rays(static_cast<std::size_t>(cfg.rays_per_step), none);
    Mat<T> target(cfg.rays_per_step, 3);
    for (Index r = 0; r < cfg.rays_per_step; ++r) {
      const auto& v = train[rng.below(train.size())];
      const Index k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(per_view)));
      rays[static_cast<std::size_t>(r)] = v.rays[static_cast<std::size_t>(k)];
      target.row(r) = v.rgb.row(k);
    }
    const RaySamples<T> s = make_samples<T>(rays, cfg.samples, true, mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));

    double loss_value = 0;
    try {
      ad::Tape<T> tape;
      ad::Var<T> planes = gen.planes(tape, tape.constant(w.flat()));
      auto dec = gen.decode(tape, gen.sample(planes, tape.constant(s.points)));
      TapedRender<T> r = composite(ad::slice_cols(dec.features, 0, 3), dec.sigma, s);
      ad::Var<T> loss = ad::mean(ad::square(ad::sub(r.pixels, tape.constant(target))));
      loss_value = static_cast<double>(loss.scalar());
      opt.zero_grad();
      tape.backward(loss);
    } catch (const NumericError& e) {
      gen.params = last_good;
      throw TrainingError(std::string("pretrain diverged at step ") + std::to_string(step) + " (" + e.what() +
                          "); restored last checkpoint");
    }
    opt.step();
    running = step == 1 ? loss_value : 0.95 * running + 0.05 * loss_value;
    if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step, running);
  }
  result.final_psnr = result.log.back().holdout_psnr;
  return result;
}

}  // namespace lenerf
