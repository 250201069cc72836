#pragma once

#include "lenerf/core/params.hpp"
#include "lenerf/render/resample.hpp"
#include "lenerf/render/volume.hpp"

namespace lenerf {

/// Stand-in super-resolution: 2x bilinear upsampling of the feature image
/// followed by a learned 1x1 channel mix to RGB. The mix starts as the
/// identity on the first three channels.
template <class T>
class Upsampler {
 public:
  Upsampler() = default;
  explicit Upsampler(Index in_channels, Index factor = 2) : channels_(in_channels), factor_(factor) {
    if (in_channels < 3) throw ConfigError("upsampler needs at least 3 input channels");
  }

  Index channels() const { return channels_; }
  Index factor() const { return factor_; }

  void init_params(ParamStore<T>& s) const {
    Mat<T> mix = Mat<T>::Zero(channels_, 3);
    for (Index c = 0; c < 3; ++c) mix(c, c) = T(1);
    s.add("upsampler.mix", mix);
    s.add("upsampler.bias", Mat<T>::Zero(1, 3));
  }

  /// feature image (h*w x C) -> RGB image (fh*fw x 3).
  ad::Var<T> forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& features, Index h, Index w) const {
    if (features.cols() != channels_)
      throw ConfigError("upsample: expected " + std::to_string(channels_) + " channels, got " +
                        std::to_string(features.cols()));
    if (features.rows() != h * w) throw ConfigError("upsample: pixel count does not match size");
    ad::Var<T> up = ad::linear_map(resize_operator<T>(h, w, h * factor_, w * factor_), features, "upsample_bilinear");
    return ad::affine(up, tape.param(s.at("upsampler.mix")), tape.param(s.at("upsampler.bias")));
  }

  Image<T> apply(const ParamStore<T>& s, const Image<T>& features) const {
    ad::Tape<T> tape;
    tape.set_grad_enabled(false);
    ad::Var<T> out = forward(tape, const_cast<ParamStore<T>&>(s), tape.constant(features.pixels), features.height,
                             features.width);
    return Image<T>(features.height * factor_, features.width * factor_, out.value());
  }

 private:
  Index channels_ = 8;
  Index factor_ = 2;
};

}  // namespace lenerf
