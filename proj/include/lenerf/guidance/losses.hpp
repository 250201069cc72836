#pragma once

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "lenerf/guidance/augment.hpp"
#include "lenerf/guidance/transformer.hpp"

namespace lenerf {

/// Direction vectors for the contrastive loss, one per row.
template <class T>
struct DirectionSets {
  Mat<T> positives;
  Mat<T> negatives;  // may have zero rows
};

/// S+ = {E_T(t_edit) - E_I(aug(I_s)), E_T(t_edit) - E_T(t_src)}
/// S- = {E_T(t') - E_I(aug(I_s)) : t' in distractors, t' != t_edit}
template <class T>
DirectionSets<T> direction_sets(const std::string& t_edit, const std::string& t_src, const Mat<T>& source_embedding,
                                const GuidanceEncoder<T>& enc, const std::vector<std::string>& distractors,
                                bool warn_if_empty = true) {
  const Mat<T> te = enc.embed_text(t_edit);
  DirectionSets<T> d;
  d.positives.resize(2, te.cols());
  d.positives.row(0) = te - source_embedding;
  d.positives.row(1) = te - enc.embed_text(t_src);
  std::vector<Mat<T>> neg;
  for (const auto& t : distractors)
    if (t != t_edit) neg.push_back(enc.embed_text(t) - source_embedding);
  if (neg.empty() && warn_if_empty) std::cerr << "warning: no distractor prompts; the negative set is empty\n";
  d.negatives.resize(static_cast<Index>(neg.size()), te.cols());
  for (std::size_t i = 0; i < neg.size(); ++i) d.negatives.row(static_cast<Index>(i)) = neg[i];
  return d;
}

template <class T>
DirectionSets<T> direction_sets(const std::string& t_edit, const std::string& t_src, const Image<T>& source,
                                GuidanceEncoder<T>& enc, const std::vector<std::string>& distractors,
                                const AugmentConfig& aug, std::uint64_t seed) {
  return direction_sets(t_edit, t_src, enc.embed_image(augment(source, aug, seed)), enc, distractors);
}

/// -log(sum_{S+} e^{q.s} / sum_{S+ u S-} e^{q.s}) with logits q.s / temperature.
template <class T>
ad::Var<T> clip_contrastive_loss(const ad::Var<T>& q, const ad::Var<T>& positives, const ad::Var<T>& negatives,
                                 T temperature = T(1)) {
  if (positives.rows() < 1) throw ContractError("clip_contrastive_loss: S+ must not be empty");
  ad::Var<T> qt = ad::transpose(q);
  ad::Var<T> lp = ad::scale(ad::matmul(positives, qt), T(1) / temperature);
  ad::Var<T> lse_pos = ad::logsumexp(lp);
  if (!negatives.valid() || negatives.rows() == 0) return ad::sub(lse_pos, lse_pos);
  ad::Var<T> ln = ad::scale(ad::matmul(negatives, qt), T(1) / temperature);
  std::vector<ad::Var<T>> all{lp, ln};
  return ad::sub(ad::logsumexp(ad::concat_rows<T>(std::span<const ad::Var<T>>(all))), lse_pos);
}

/// Plain evaluation of the contrastive loss.
template <class T>
T clip_contrastive_value(const Mat<T>& q, const DirectionSets<T>& sets, T temperature = T(1)) {
  ad::Tape<T> tape;
  tape.set_grad_enabled(false);
  ad::Var<T> neg = sets.negatives.rows() ? tape.constant(sets.negatives) : ad::Var<T>();
  return clip_contrastive_loss(tape.constant(q), tape.constant(sets.positives), neg, temperature).scalar();
}

/// Stand-in identity embedding: luma, 8x8 block average, flattened, unit norm.
template <class T>
ad::Var<T> identity_embedding(const ad::Var<T>& image, Index h, Index w) {
  if (h != w || h % 8) throw ConfigError("identity embedding needs a square image with side divisible by 8");
  Mat<T> luma(3, 1);
  luma << T(0.299), T(0.587), T(0.114);
  auto& tape = image.tape();
  ad::Var<T> gray = ad::matmul(image, tape.constant(luma));
  ad::Var<T> pooled = ad::linear_map(pool_operator<T>(h, w, h / 8), gray, "identity_pool");
  return ad::normalize_rows(ad::reshape(pooled, 1, 64));
}

/// 1 - cosine of the identity embeddings, in [0, 2].
template <class T>
ad::Var<T> identity_loss(const ad::Var<T>& source, const ad::Var<T>& edited, Index h, Index w) {
  ad::Var<T> a = identity_embedding(source, h, w), b = identity_embedding(edited, h, w);
  return ad::add_scalar(ad::scale(ad::sum(ad::mul(a, b)), T(-1)), T(1));
}

template <class T>
T identity_loss_value(const Image<T>& source, const Image<T>& edited) {
  ad::Tape<T> tape;
  return identity_loss(tape.constant(source.pixels), tape.constant(edited.pixels), source.height, source.width).scalar();
}

struct ClipPrompts {
  std::string t_edit;
  std::string t_src;
  std::vector<std::string> distractors;
};

struct ClipPlusConfig {
  double lambda_l2 = 0.8;
  double lambda_id = 0.1;
  double temperature = 1.0;
  AugmentConfig augment;
};

template <class T>
struct ClipPlusTerms {
  ad::Var<T> clip, l2, id, total;
};

/// L_CLIP+ = L_CLIP + lambda_L2 |dw|_2 + lambda_id L_id on images of the
/// encoder's size. Both images get the same augmentation draw.
template <class T>
ClipPlusTerms<T> clip_plus_loss(const ad::Var<T>& source, const ad::Var<T>& edited, const ad::Var<T>& delta_w,
                                const ClipPrompts& prompts, const ClipPlusConfig& cfg, GuidanceEncoder<T>& enc,
                                std::uint64_t seed) {
  auto& tape = edited.tape();
  const Index h = enc.image_height(), w = enc.image_width();
  ad::Var<T> es = enc.embed_image(tape, augment(source, h, w, cfg.augment, seed));
  ad::Var<T> et = enc.embed_image(tape, augment(edited, h, w, cfg.augment, seed));
  const DirectionSets<T> sets = direction_sets(prompts.t_edit, prompts.t_src, es.value(), enc, prompts.distractors, false);
  ClipPlusTerms<T> t;
  ad::Var<T> neg = sets.negatives.rows() ? tape.constant(sets.negatives) : ad::Var<T>();
  // S+ and S- share E_I(aug(I_s)); with a constant source they carry no gradient.
  t.clip = clip_contrastive_loss(ad::sub(et, es), tape.constant(sets.positives), neg, static_cast<T>(cfg.temperature));
  t.l2 = ad::norm(delta_w);
  t.id = identity_loss(source, edited, h, w);
  t.total = ad::add(t.clip, ad::add(ad::scale(t.l2, static_cast<T>(cfg.lambda_l2)),
                                    ad::scale(t.id, static_cast<T>(cfg.lambda_id))));
  return t;
}

}  // namespace lenerf
