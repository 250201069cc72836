#pragma once

#include <memory>
#include <vector>

#include "lenerf/edit/networks.hpp"
#include "lenerf/field/generator.hpp"

namespace lenerf {

/// LRM, DN and AFN of one edit with their tensors.
template <class T>
struct EditModule {
  EditConfig config;
  ResidualMapper<T> lrm;
  DeformationNet<T> dn;
  AttentionFieldNet<T> afn;
  ParamStore<T> params;
  bool force_mask_one = false;  // ablation: m = 1 everywhere

  static EditModule create(const EditConfig& cfg, const SynthesizerConfig& synth, std::uint64_t seed) {
    EditModule e;
    e.config = cfg;
    Rng rng(seed);
    const Index d = synth.groups * synth.group_dim;
    e.lrm = ResidualMapper<T>(e.params, synth.groups, synth.group_dim, cfg.lrm_hidden, rng);
    e.afn = AttentionFieldNet<T>(e.params, synth.channels, d, cfg.afn_hidden, cfg.afn_bias_init, rng);
    e.dn = DeformationNet<T>(e.params, d, cfg.dn_hidden, cfg.gamma_d, rng);
    return e;
  }

  bool deforms() const { return config.deformation && config.gamma_d != 0; }

  template <class U>
  EditModule<U> cast(const SynthesizerConfig& synth) const {
    EditModule<U> e = EditModule<U>::create(config, synth, 0);
    e.params = params.template cast<U>();
    e.force_mask_one = force_mask_one;
    return e;
  }

  std::vector<Parameter<T>*> section(const std::string& prefix) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params.all())
      if (p.name.rfind(prefix + ".", 0) == 0) out.push_back(&p);
    return out;
  }
};

/// Everything computed by one evaluation of the edited field at n points.
template <class T>
struct EditedPoints {
  ad::Var<T> fused;      // F-hat, n x M_f
  ad::Var<T> mask;       // m, n x 1
  ad::Var<T> source;     // F_s at x'
  ad::Var<T> target;     // F_t at x
  ad::Var<T> deformed;   // x'
  ad::Var<T> delta_w;    // 1 x d
  ad::Var<T> w_t;        // 1 x d
};

/// Source field plus a chain of edits. Edit k takes edit k-1's fused field
/// as its source and edit k-1's target latent as its w_s; edit 0 starts from
/// the generator at the base latent.
template <class T>
class EditedField {
 public:
  EditedField(Generator<T>& gen, LatentCode<T> base) : gen_(&gen), base_(std::move(base)) {
    base_planes_ = gen.synth.synthesize(base_, gen.params).data;
  }

  Generator<T>& generator() { return *gen_; }
  const LatentCode<T>& base_latent() const { return base_; }
  std::size_t size() const { return edits_.size(); }
  EditModule<T>& edit(std::size_t k) { return *edits_.at(k); }

  /// Appends an edit; the field keeps a reference to the module.
  void push(EditModule<T>& e) {
    edits_.push_back(&e);
    refresh();
  }
  void pop() {
    edits_.pop_back();
    refresh();
  }

  /// Recomputes cached latents/planes after any edit's parameters change.
  void refresh() {
    latents_.assign(1, base_);
    target_planes_.clear();
    for (auto* e : edits_) {
      auto [dw, wt] = e->lrm.map_latent(latents_.back(), e->params);
      latents_.push_back(wt);
      target_planes_.push_back(gen_->synth.synthesize(wt, gen_->params).data);
    }
  }

  /// w_s of edit k (k = size() gives the final target latent).
  const LatentCode<T>& latent(std::size_t k) const { return latents_.at(k); }

  /// Evaluates edit `level` (and, recursively, its sources) at `points`.
  /// `level` = -1 is the unedited source field. Only the top level records
  /// taped LRM/DN/AFN parameters when `live` is set; lower levels use cached
  /// planes and are constant in their parameters.
  EditedPoints<T> evaluate(ad::Tape<T>& tape, const ad::Var<T>& points, int level, bool live = true) {
    EditedPoints<T> out;
    if (level < 0) {
      out.fused = gen_->sample(tape.constant(base_planes_), points);
      out.mask = tape.constant(Mat<T>::Zero(points.rows(), 1));
      out.source = out.target = out.fused;
      out.deformed = points;
      return out;
    }
    EditModule<T>& e = *edits_.at(static_cast<std::size_t>(level));
    const bool grad_on = tape.grad_enabled();
    if (!live) tape.set_grad_enabled(false);
    const LatentCode<T>& ws_code = latents_.at(static_cast<std::size_t>(level));
    ad::Var<T> w_s = tape.constant(ws_code.flat());
    ad::Var<T> planes_t;
    if (live) {
      out.delta_w = e.lrm.residual(tape, e.params, w_s);
      out.w_t = ad::add(w_s, out.delta_w);
      planes_t = gen_->planes(tape, out.w_t);
    } else {
      const LatentCode<T>& wt = latents_.at(static_cast<std::size_t>(level) + 1);
      out.w_t = tape.constant(wt.flat());
      out.delta_w = tape.constant(wt.flat() - ws_code.flat());
      planes_t = tape.constant(target_planes_.at(static_cast<std::size_t>(level)));
    }
    ad::Var<T> cond = ad::concat_cols({w_s, out.w_t});
    out.deformed = e.deforms() ? e.dn.forward(tape, e.params, points, cond) : points;
    out.source = evaluate(tape, out.deformed, level - 1, false).fused;
    out.target = gen_->sample(planes_t, points);
    if (e.force_mask_one) {
      out.mask = tape.constant(Mat<T>::Ones(points.rows(), 1));
      out.fused = out.target;
    } else {
      out.mask = e.afn.forward(tape, e.params, out.source, out.deformed, out.target, points, cond);
      out.fused = fuse(out.source, out.target, out.mask);
    }
    tape.set_grad_enabled(grad_on);
    return out;
  }

  int top() const { return static_cast<int>(edits_.size()) - 1; }

 private:
  Generator<T>* gen_;
  LatentCode<T> base_;
  Mat<T> base_planes_;
  std::vector<EditModule<T>*> edits_;
  std::vector<LatentCode<T>> latents_{};
  std::vector<Mat<T>> target_planes_;
};

/// Rendered views of an edited field.
template <class T>
struct EditRender {
  Image<T> features;   // fused field, H_V x W_V x M_c
  Image<T> rgb;        // upsampled, H x W x 3
  Image<T> mask;       // H_V x W_V x 1, weights of the fused density
  Image<T> target_rgb; // raw target field (m = 1), upsampled
};

/// Renders the field at `level` (-1: source). Deterministic midpoint sampling
/// unless `stratified`.
template <class T>
EditRender<T> render_edit(EditedField<T>& field, int level, const CameraPose& cam, Index h, Index w, Index per_ray,
                          bool with_target = false, bool stratified = false, std::uint64_t seed = 0) {
  Generator<T>& gen = field.generator();
  const auto rays = generate_rays(cam, h, w, gen.config.synth.extent);
  EditRender<T> out;
  Mat<T> mask_px(h * w, 1);
  Mat<T> target_px;
  const Index chunk = 256;
  Mat<T> feat_px;
  for (Index start = 0; start < h * w; start += chunk) {
    const Index cnt = std::min(chunk, h * w - start);
    std::vector<Ray> part(rays.begin() + start, rays.begin() + start + cnt);
    const RaySamples<T> s = make_samples<T>(part, per_ray, stratified, mix_seed(seed, static_cast<std::uint64_t>(start)));
    ad::Tape<T> tape;
    tape.set_grad_enabled(false);
    EditedPoints<T> ep = field.evaluate(tape, tape.constant(s.points), level, false);
    auto dec = gen.decode(tape, ep.fused);
    TapedRender<T> r = composite(dec.features, dec.sigma, s);
    if (feat_px.size() == 0) feat_px.resize(h * w, dec.features.cols());
    feat_px.middleRows(start, cnt) = r.pixels.value();
    mask_px.middleRows(start, cnt) = ad::weighted_sum(r.weights, ep.mask).value();
    if (with_target) {
      auto dt = gen.decode(tape, ep.target);
      TapedRender<T> rt = composite(dt.features, dt.sigma, s);
      if (target_px.size() == 0) target_px.resize(h * w, dt.features.cols());
      target_px.middleRows(start, cnt) = rt.pixels.value();
    }
  }
  out.features = Image<T>(h, w, std::move(feat_px));
  out.rgb = gen.upsampler.apply(gen.params, out.features);
  out.mask = Image<T>(h, w, std::move(mask_px));
  if (with_target) out.target_rgb = gen.upsampler.apply(gen.params, Image<T>(h, w, std::move(target_px)));
  return out;
}

}  // namespace lenerf
