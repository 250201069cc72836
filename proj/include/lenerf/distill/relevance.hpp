#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "lenerf/guidance/encoders.hpp"
#include "lenerf/render/resample.hpp"

namespace lenerf {

/// Attention map of one head with dy/dA.
template <class T>
struct HeadAttention {
  Mat<T> attention;
  Mat<T> gradient;
};

/// R = I; per layer R <- R + mean_h(max(0, dA * A)) R.
template <class T>
Mat<T> propagate_relevance(const std::vector<std::vector<HeadAttention<T>>>& layers) {
  if (layers.empty() || layers[0].empty()) throw ContractError("propagate_relevance: no attention maps");
  const Index n = layers[0][0].attention.rows();
  Mat<T> r = Mat<T>::Identity(n, n);
  for (const auto& heads : layers) {
    Mat<T> abar = Mat<T>::Zero(n, n);
    for (const auto& h : heads) {
      if (h.attention.rows() != n || h.attention.cols() != n || h.gradient.rows() != n || h.gradient.cols() != n)
        throw ContractError("propagate_relevance: attention maps must be square and of equal size");
      abar += h.gradient.cwiseProduct(h.attention).cwiseMax(T(0));
    }
    abar /= static_cast<T>(heads.size());
    r += abar * r;
  }
  return r;
}

/// Min-max normalisation. All-equal input becomes all ones when positive and
/// all zeros when zero (`zero` is set in that case).
template <class T>
Mat<T> minmax_normalize(const Mat<T>& v, bool* zero = nullptr) {
  if (zero) *zero = false;
  const T lo = v.minCoeff(), hi = v.maxCoeff();
  if (hi - lo > T(0)) return (v.array() - lo) / (hi - lo);
  if (hi > T(0)) return Mat<T>::Ones(v.rows(), v.cols());
  if (zero) *zero = true;
  return Mat<T>::Zero(v.rows(), v.cols());
}

/// Relevance of each patch token for the class token, as a patch grid.
template <class T>
Mat<T> class_token_relevance(const Mat<T>& r, Index patches_y, Index patches_x) {
  if (r.rows() != patches_y * patches_x + 1) throw ContractError("class_token_relevance: token count mismatch");
  Mat<T> row = r.block(0, 1, 1, patches_y * patches_x);
  return Eigen::Map<const Mat<T>>(row.data(), patches_y, patches_x);
}

/// 2D relevance mask for `t_mask` on `image`, upsampled to out_h x out_w and
/// min-max normalised (values in [0, 1], returned as an out_h*out_w x 1 image).
/// y is the cosine between E_T(t_mask) and E_I(image).
template <class T>
Image<T> relevance_map(TransformerGuidance<T>& enc, const Image<T>& image, const std::string& t_mask, Index out_h,
                       Index out_w, bool warn = true) {
  const Mat<T> text = enc.embed_text(t_mask);
  ad::Tape<T> tape;
  ad::Var<T> img = tape.variable(image.pixels);
  ad::Var<T> e = enc.embed_image(tape, img);
  ad::Var<T> y = ad::sum(ad::mul(e, tape.constant(text)));
  tape.backward(y);
  const AttentionRecord<T>& rec = enc.last_record();
  std::vector<std::vector<HeadAttention<T>>> layers;
  for (const auto& heads : rec.maps) {
    layers.emplace_back();
    for (const auto& a : heads) {
      Mat<T> g = a.grad().size() ? a.grad() : Mat<T>::Zero(a.rows(), a.cols());
      layers.back().push_back({a.value(), g});
    }
  }
  const TransformerSpec& s = enc.transformer().spec();
  Mat<T> grid = class_token_relevance(propagate_relevance(layers), s.patches_y(), s.patches_x());
  Mat<T> flat = Eigen::Map<const Mat<T>>(grid.data(), grid.size(), 1);
  Mat<T> up = resize_operator<T>(s.patches_y(), s.patches_x(), out_h, out_w) * flat;
  bool zero = false;
  Mat<T> norm = minmax_normalize(up, &zero);
  if (zero && warn) std::cerr << "warning: relevance for '" << t_mask << "' is zero everywhere\n";
  return Image<T>(out_h, out_w, norm);
}

/// Pseudo-label M: relevance of I_s, or the elementwise max of the relevance
/// of I_s and I_t when deformation is enabled.
template <class T>
Image<T> pseudo_label(TransformerGuidance<T>& enc, const Image<T>& source, const Image<T>* target,
                      const std::string& t_mask, bool deformation_enabled, Index out_h, Index out_w) {
  Image<T> m = relevance_map(enc, source, t_mask, out_h, out_w);
  if (deformation_enabled) {
    if (!target) throw ContractError("pseudo_label: deformation needs the target image");
    const Image<T> mt = relevance_map(enc, *target, t_mask, out_h, out_w);
    m.pixels = m.pixels.cwiseMax(mt.pixels);
  }
  return m;
}

/// Mean squared difference; the label is a constant.
template <class T>
ad::Var<T> mask_loss(const ad::Var<T>& rendered, const Mat<T>& label) {
  if (rendered.rows() != label.rows() || rendered.cols() != label.cols())
    throw ConfigError("mask_loss: rendered mask and pseudo-label differ in size");
  return ad::mean(ad::square(ad::sub(rendered, rendered.tape().constant(label))));
}

}  // namespace lenerf
