#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lenerf/core/params.hpp"
#include "lenerf/render/volume.hpp"

namespace lenerf {

/// Image/text embedding provider. Image embeddings are taped so losses can
/// backpropagate to the pixels; text embeddings are fixed vectors.
template <class T>
class GuidanceEncoder {
 public:
  virtual ~GuidanceEncoder() = default;
  virtual Index embed_dim() const = 0;
  virtual Index image_height() const = 0;
  virtual Index image_width() const = 0;
  /// image: (h*w) x 3 -> 1 x e, unit norm.
  virtual ad::Var<T> embed_image(ad::Tape<T>& tape, const ad::Var<T>& image) = 0;
  virtual Mat<T> embed_text(const std::string& prompt) const = 0;

  Mat<T> embed_image(const Image<T>& img) {
    ad::Tape<T> tape;
    tape.set_grad_enabled(false);
    return embed_image(tape, tape.constant(img.pixels)).value();
  }
};

struct TransformerSpec {
  Index image_height = 64;
  Index image_width = 64;
  Index patch = 4;
  Index dim = 16;
  Index heads = 2;
  Index head_dim = 8;
  Index value_dim = 8;
  Index layers = 2;
  Index embed_dim = 16;
  bool mlp = true;

  Index patches_y() const { return image_height / patch; }
  Index patches_x() const { return image_width / patch; }
  Index tokens() const { return patches_y() * patches_x() + 1; }

  void validate() const {
    if (patch < 1 || image_height % patch || image_width % patch)
      throw ConfigError("transformer: image size must be divisible by the patch size");
    if (dim < 1 || heads < 1 || head_dim < 1 || value_dim < 1 || layers < 1 || embed_dim < 1)
      throw ConfigError("transformer: all sizes must be positive");
  }
};

/// Attention maps of one forward pass, per layer and head. After a backward
/// pass through the same tape, `grad()` on each Var holds dy/dA.
template <class T>
struct AttentionRecord {
  std::vector<std::vector<ad::Var<T>>> maps;  // [layer][head], tokens x tokens
};

/// ViT-style encoder: patch embedding + positional embedding, a class token,
/// residual multi-head attention blocks (optional tanh MLP), and a projection
/// of the class token, normalised to unit length. No layer norm.
template <class T>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  explicit TransformerEncoder(TransformerSpec spec) : spec_(spec) { spec_.validate(); }

  const TransformerSpec& spec() const { return spec_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  static std::string name(Index layer, Index head, const char* what) {
    return "enc.l" + std::to_string(layer) + ".h" + std::to_string(head) + "." + what;
  }
  static std::string name(Index layer, const char* what) { return "enc.l" + std::to_string(layer) + "." + what; }

  /// Registers every tensor with zeros (callers fill them in).
  void allocate() {
    const Index pp = spec_.patch * spec_.patch * 3;
    const Index P = spec_.tokens() - 1;
    params_.add("enc.embed.w", Mat<T>::Zero(pp, spec_.dim));
    params_.add("enc.embed.b", Mat<T>::Zero(1, spec_.dim));
    params_.add("enc.pos", Mat<T>::Zero(P, spec_.dim));
    params_.add("enc.cls", Mat<T>::Zero(1, spec_.dim));
    for (Index l = 0; l < spec_.layers; ++l) {
      for (Index h = 0; h < spec_.heads; ++h) {
        params_.add(name(l, h, "q"), Mat<T>::Zero(spec_.dim, spec_.head_dim));
        params_.add(name(l, h, "k"), Mat<T>::Zero(spec_.dim, spec_.head_dim));
        params_.add(name(l, h, "v"), Mat<T>::Zero(spec_.dim, spec_.value_dim));
      }
      params_.add(name(l, "o"), Mat<T>::Zero(spec_.heads * spec_.value_dim, spec_.dim));
      if (spec_.mlp) {
        params_.add(name(l, "mlp.w1"), Mat<T>::Zero(spec_.dim, spec_.dim));
        params_.add(name(l, "mlp.b1"), Mat<T>::Zero(1, spec_.dim));
        params_.add(name(l, "mlp.w2"), Mat<T>::Zero(spec_.dim, spec_.dim));
      }
    }
    params_.add("enc.proj", Mat<T>::Zero(spec_.dim, spec_.embed_dim));
    params_.set_trainable(false);
  }

  void randomize(Rng& rng) {
    for (auto& p : params_.all()) {
      const double fan_in = static_cast<double>(p.value.rows());
      p.value = random_normal<T>(p.value.rows(), p.value.cols(), 1.0 / std::sqrt(fan_in), rng);
    }
  }

  /// Rows of the image gathered so that each consecutive patch*patch block is one patch.
  std::vector<Index> patch_order() const {
    std::vector<Index> idx;
    const Index p = spec_.patch;
    for (Index py = 0; py < spec_.patches_y(); ++py)
      for (Index px = 0; px < spec_.patches_x(); ++px)
        for (Index i = 0; i < p; ++i)
          for (Index j = 0; j < p; ++j) idx.push_back((py * p + i) * spec_.image_width + px * p + j);
    return idx;
  }

  /// image: (h*w) x 3 -> unit 1 x embed_dim. Attention maps are stored in `record` if given.
  ad::Var<T> forward(ad::Tape<T>& tape, const ad::Var<T>& image, AttentionRecord<T>* record = nullptr) {
    if (image.rows() != spec_.image_height * spec_.image_width || image.cols() != 3)
      throw ConfigError("transformer: expected a " + std::to_string(spec_.image_height) + "x" +
                        std::to_string(spec_.image_width) + " RGB image");
    const Index p = spec_.patch, P = spec_.tokens() - 1;
    auto prm = [&](const std::string& n) { return tape.param(params_.at(n)); };
    ad::Var<T> patches = ad::reshape(ad::gather_rows(image, patch_order()), P, p * p * 3);
    ad::Var<T> tok = ad::add(ad::affine(patches, prm("enc.embed.w"), prm("enc.embed.b")), prm("enc.pos"));
    std::vector<ad::Var<T>> rows{prm("enc.cls"), tok};
    ad::Var<T> x = ad::concat_rows<T>(std::span<const ad::Var<T>>(rows));
    if (record) record->maps.assign(static_cast<std::size_t>(spec_.layers), {});
    const T inv = T(1) / std::sqrt(static_cast<T>(spec_.head_dim));
    for (Index l = 0; l < spec_.layers; ++l) {
      std::vector<ad::Var<T>> outs;
      for (Index h = 0; h < spec_.heads; ++h) {
        ad::Var<T> q = ad::matmul(x, prm(name(l, h, "q")));
        ad::Var<T> k = ad::matmul(x, prm(name(l, h, "k")));
        ad::Var<T> v = ad::matmul(x, prm(name(l, h, "v")));
        ad::Var<T> a = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv));
        if (record) record->maps[static_cast<std::size_t>(l)].push_back(a);
        outs.push_back(ad::matmul(a, v));
      }
      x = ad::add(x, ad::matmul(ad::concat_cols<T>(std::span<const ad::Var<T>>(outs)), prm(name(l, "o"))));
      if (spec_.mlp) {
        ad::Var<T> hdn = ad::tanh(ad::affine(x, prm(name(l, "mlp.w1")), prm(name(l, "mlp.b1"))));
        x = ad::add(x, ad::matmul(hdn, prm(name(l, "mlp.w2"))));
      }
    }
    return ad::normalize_rows(ad::matmul(ad::slice_rows(x, 0, 1), prm("enc.proj")));
  }

 private:
  TransformerSpec spec_;
  ParamStore<T> params_;
};

}  // namespace lenerf
