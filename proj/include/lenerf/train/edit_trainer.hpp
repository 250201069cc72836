#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lenerf/core/adam.hpp"
#include "lenerf/distill/relevance.hpp"
#include "lenerf/edit/edited_field.hpp"
#include "lenerf/guidance/encoders.hpp"
#include "lenerf/guidance/losses.hpp"
#include "lenerf/train/regularizers.hpp"

namespace lenerf {

struct TrainConfig {
  AfnWeights weights;
  ClipPlusConfig clip;
  double k_top_fraction = 0.01;
  int steps = 2000;
  double lr_lrm = 1e-3;
  double lr_afn = 3e-3;
  double lr_dn = 1e-4;
  double lr_final_fraction = 1.0;  // < 1: cosine decay to this fraction of each lr over `steps`
  std::uint64_t seed = 1;
  int label_interval = 25;
  int views_per_step = 1;
  int pool_views = 32;
  Index view_resolution = 16;   // H_V during training
  Index samples = 32;           // N_s during training (midpoint)
  Index label_resolution = 32;  // H_V of the source render fed to the relevance encoder
  Index label_samples = 48;
  Index patch = 4;
  double window = 0.1;          // synthetic oracle window softness
  Index tv_grid = 12;
  std::string encoder = "synthetic_oracle";
  PoseDistribution poses;
  ClipPrompts prompts{"red left blob", "two blobs", {"green right blob", "blue left blob", "yellow left blob"}};
  std::string t_mask = "left blob";
};

/// One row of the loss log.
struct LossRow {
  int step = 0;
  double l_clip = 0, l_l2 = 0, l_id = 0, l_mask = 0, l_tv = 0, l_sparsity = 0, total_lrm = 0, total_afn = 0;
};

inline std::string loss_csv_header() { return "step,l_clip,l_l2,l_id,l_mask,l_tv,l_sparsity,total_lrm,total_afn"; }

inline std::string loss_csv_row(const LossRow& r) {
  std::ostringstream s;
  s << std::setprecision(9) << r.step << ',' << r.l_clip << ',' << r.l_l2 << ',' << r.l_id << ',' << r.l_mask << ','
    << r.l_tv << ',' << r.l_sparsity << ',' << r.total_lrm << ',' << r.total_afn;
  return s.str();
}

inline void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << loss_csv_header() << "\n";
  for (const auto& r : rows) f << loss_csv_row(r) << "\n";
}

/// Cached per-view data: rays, samples, source render and pseudo-label.
template <class T>
struct TrainingView {
  CameraPose pose;
  RaySamples<T> samples;
  Mat<T> source_rgb;   // upsampled source render, (2 H_V)^2 x 3
  Mat<T> label;        // H_V^2 x 1
  int label_step = -1;
};

/// Trains the top edit of `field` (LRM + DN on L_CLIP+, AFN on L_AFN).
/// Generator parameters and earlier edits stay frozen; a change to the
/// generator raises FrozenParameterError.
template <class T>
class EditTrainer {
 public:
  EditTrainer(EditedField<T>& field, const TrainConfig& cfg, std::vector<VocabEntry> vocab)
      : field_(&field), cfg_(cfg), vocab_(std::move(vocab)) {
    if (field.size() == 0) throw ConfigError("edit training needs an edit module on the field");
    const Index hr = 2 * cfg.view_resolution;
    clip_encoder_ = make_encoder<T>(cfg.encoder, vocab_, hr, hr, cfg.patch, cfg.seed, cfg.window);
    const Index lr = 2 * cfg.label_resolution;
    label_encoder_ = make_encoder<T>(cfg.encoder, vocab_, lr, lr, cfg.patch, cfg.seed, cfg.window);
    label_encoder_->embed_text(cfg.t_mask);
    clip_encoder_->embed_text(cfg.prompts.t_edit);
  }

  const std::vector<LossRow>& log() const { return log_; }
  const std::vector<TrainingView<T>>& views() const { return views_; }
  TransformerGuidance<T>& label_encoder() { return *label_encoder_; }

  /// Pool of training views with source renders and initial pseudo-labels.
  void prepare() {
    EditModule<T>& e = top();
    Rng rng(mix_seed(cfg_.seed, 0x700));
    views_.clear();
    const int level = field_->top() - 1;
    for (int v = 0; v < cfg_.pool_views; ++v) {
      TrainingView<T> tv;
      tv.pose = cfg_.poses.sample(rng);
      const auto rays = generate_rays(tv.pose, cfg_.view_resolution, cfg_.view_resolution,
                                      field_->generator().config.synth.extent);
      tv.samples = make_samples<T>(rays, cfg_.samples, false, 0);
      EditRender<T> src = render_edit(*field_, level, tv.pose, cfg_.view_resolution, cfg_.view_resolution, cfg_.samples);
      tv.source_rgb = src.rgb.pixels;
      views_.push_back(std::move(tv));
    }
    for (auto& tv : views_) make_label(tv, 0, e.deforms());
  }

  /// Runs `steps` optimisation steps (cfg.steps if negative).
  void train(int steps = -1, const std::function<void(const LossRow&)>& on_step = nullptr) {
    if (steps < 0) steps = cfg_.steps;
    if (views_.empty()) prepare();
    EditModule<T>& e = top();
    Generator<T>& gen = field_->generator();
    gen.params.set_trainable(false);
    for (std::size_t k = 0; k + 1 < field_->size(); ++k) field_->edit(k).params.set_trainable(false);
    e.params.set_trainable(true);
    const ParamStore<T> frozen = gen.params;
    if (!opt_ready_) {
      opt_lrm_ = Adam<T>(e.section("lrm"), cfg_.lr_lrm);
      opt_afn_ = Adam<T>(e.section("afn"), cfg_.lr_afn);
      opt_dn_ = Adam<T>(e.section("dn"), cfg_.lr_dn);
      opt_ready_ = true;
    }
    Rng rng(mix_seed(cfg_.seed, 0x5e1 + static_cast<std::uint64_t>(step_)));
    std::vector<Mat<T>> last_good = snapshot(e.params);
    for (int it = 0; it < steps; ++it) {
      ++step_;
      const double f = lr_factor(step_);
      opt_lrm_.set_lr(cfg_.lr_lrm * f);
      opt_afn_.set_lr(cfg_.lr_afn * f);
      opt_dn_.set_lr(cfg_.lr_dn * f);
      LossRow row;
      row.step = step_;
      try {
        row = step(rng);
      } catch (const NumericError& err) {
        restore(e.params, last_good);
        field_->refresh();
        throw TrainingError("edit training diverged at step " + std::to_string(step_) + " in '" + err.op() +
                            "'; parameters restored to the previous step");
      }
      last_good = snapshot(e.params);
      log_.push_back(row);
      if (on_step) on_step(row);
    }
    field_->refresh();
    assert_frozen(frozen, gen.params);
  }

  static void assert_frozen(const ParamStore<T>& before, const ParamStore<T>& after) {
    if (before.all().size() != after.all().size()) throw FrozenParameterError("frozen parameter set changed size");
    for (std::size_t i = 0; i < before.all().size(); ++i) {
      const auto& a = before.all()[i];
      const auto& b = after.all()[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols() ||
          std::memcmp(a.value.data(), b.value.data(), sizeof(T) * static_cast<std::size_t>(a.value.size())) != 0)
        throw FrozenParameterError("frozen parameter '" + a.name + "' was modified during edit training");
    }
  }

  int steps_done() const { return step_; }

  /// Cosine schedule from 1 to lr_final_fraction over cfg.steps, flat after.
  double lr_factor(int step) const {
    if (cfg_.steps <= 1) return 1.0;
    const double t = std::min(1.0, double(step - 1) / double(cfg_.steps - 1));
    return cfg_.lr_final_fraction + (1.0 - cfg_.lr_final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  }

 private:
  static std::vector<Mat<T>> snapshot(const ParamStore<T>& s) {
    std::vector<Mat<T>> v;
    for (const auto& p : s.all()) v.push_back(p.value);
    return v;
  }
  static void restore(ParamStore<T>& s, const std::vector<Mat<T>>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) s.all()[i].value = v[i];
  }

  EditModule<T>& top() { return field_->edit(field_->size() - 1); }

  void make_label(TrainingView<T>& tv, int step, bool deform) {
    const int level = field_->top() - 1;
    const Index lr = cfg_.label_resolution;
    EditRender<T> src = render_edit(*field_, level, tv.pose, lr, lr, cfg_.label_samples, deform);
    const Image<T>* target = nullptr;
    Image<T> raw_target;
    if (deform) {
      EditRender<T> cur = render_edit(*field_, field_->top(), tv.pose, lr, lr, cfg_.label_samples, true);
      raw_target = cur.target_rgb;
      target = &raw_target;
    }
    tv.label = pseudo_label(*label_encoder_, src.rgb, target, cfg_.t_mask, deform, cfg_.view_resolution,
                            cfg_.view_resolution)
                   .pixels;
    tv.label_step = step;
  }

  struct ViewLosses {
    ClipPlusTerms<T> clip;
    ad::Var<T> mask, tv, sparsity, afn;
  };

  ViewLosses view_losses(ad::Tape<T>& tape, TrainingView<T>& tv, std::uint64_t aug_seed) {
    EditModule<T>& e = top();
    Generator<T>& gen = field_->generator();
    const Index h = cfg_.view_resolution;
    EditedPoints<T> ep = field_->evaluate(tape, tape.constant(tv.samples.points), field_->top(), true);
    auto dec = gen.decode(tape, ep.fused);
    TapedRender<T> r = composite(dec.features, dec.sigma, tv.samples);
    ad::Var<T> rgb = gen.upsampler.forward(tape, gen.params, r.pixels, h, h);
    ViewLosses l;
    l.clip = clip_plus_loss(tape.constant(tv.source_rgb), rgb, ep.delta_w, cfg_.prompts, cfg_.clip, *clip_encoder_,
                            aug_seed);
    l.mask = mask_loss(ad::weighted_sum(r.weights, ep.mask), tv.label);
    if (cfg_.weights.tv != 0 && !e.force_mask_one) {
      ad::Var<T> lattice = tape.constant(lattice_points<T>(cfg_.tv_grid, gen.config.synth.extent));
      l.tv = tv_loss(field_->evaluate(tape, lattice, field_->top(), true).mask, cfg_.tv_grid);
    } else {
      l.tv = tape.constant(Mat<T>::Zero(1, 1));
    }
    l.sparsity = e.force_mask_one ? tape.constant(Mat<T>::Zero(1, 1))
                                  : sparsity_loss(ep.mask, k_from_fraction(ep.mask.rows(), cfg_.k_top_fraction));
    l.afn = afn_loss(l.mask, l.tv, l.sparsity, l.clip.total, cfg_.weights);
    return l;
  }

  // LRM (and DN) follow L_CLIP+; the AFN follows L_AFN. Two backward passes
  // over one tape keep the two gradient routes apart.
  LossRow step(Rng& rng) {
    EditModule<T>& e = top();
    const int nv = std::max(1, cfg_.views_per_step);
    std::vector<std::size_t> picks;
    for (int v = 0; v < nv; ++v) picks.push_back(rng.below(views_.size()));
    if (e.deforms()) {
      field_->refresh();
      for (std::size_t i : picks)
        if (step_ - views_[i].label_step >= cfg_.label_interval) make_label(views_[i], step_, true);
    }
    ad::Tape<T> tape;
    std::vector<ad::Var<T>> lrm_terms, afn_terms;
    LossRow row;
    row.step = step_;
    const double inv = 1.0 / nv;
    for (int v = 0; v < nv; ++v) {
      const std::uint64_t aug_seed = mix_seed(cfg_.seed, static_cast<std::uint64_t>(step_) * 64 + std::uint64_t(v));
      ViewLosses l = view_losses(tape, views_[picks[static_cast<std::size_t>(v)]], aug_seed);
      lrm_terms.push_back(l.clip.total);
      afn_terms.push_back(l.afn);
      row.l_clip += inv * l.clip.clip.scalar();
      row.l_l2 += inv * l.clip.l2.scalar();
      row.l_id += inv * l.clip.id.scalar();
      row.l_mask += inv * l.mask.scalar();
      row.l_tv += inv * l.tv.scalar();
      row.l_sparsity += inv * l.sparsity.scalar();
      row.total_lrm += inv * l.clip.total.scalar();
      row.total_afn += inv * l.afn.scalar();
    }
    auto mean = [&](const std::vector<ad::Var<T>>& xs) {
      return ad::scale(ad::sum(ad::concat_rows<T>(std::span<const ad::Var<T>>(xs))), static_cast<T>(inv));
    };
    ad::Var<T> total_lrm = mean(lrm_terms), total_afn = mean(afn_terms);

    opt_lrm_.zero_grad();
    opt_dn_.zero_grad();
    opt_afn_.zero_grad();
    tape.backward(total_lrm);
    opt_lrm_.step();
    if (e.deforms()) opt_dn_.step();
    if (!e.force_mask_one) {
      opt_afn_.zero_grad();
      tape.backward(total_afn);
      opt_afn_.step();
    }
    return row;
  }

  EditedField<T>* field_;
  TrainConfig cfg_;
  std::vector<VocabEntry> vocab_;
  std::unique_ptr<TransformerGuidance<T>> clip_encoder_, label_encoder_;
  std::vector<TrainingView<T>> views_;
  std::vector<LossRow> log_;
  Adam<T> opt_lrm_, opt_afn_, opt_dn_;
  bool opt_ready_ = false;
  int step_ = 0;
};

}  // namespace lenerf
