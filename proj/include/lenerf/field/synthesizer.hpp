#pragma once

#include <array>
#include <string>

#include "lenerf/field/latent.hpp"
#include "lenerf/field/triplane.hpp"

namespace lenerf {

struct SynthesizerConfig {
  Index resolution = 32;       // R_p
  Index channels = 8;          // M_f
  Index input_channels = 16;   // learned constant input per texel
  Index hidden_channels = 16;
  Index groups = 4;            // N
  Index group_dim = 16;        // d_g
  double extent = 1.0;
  double style_scale = 50.0;   // init scale of the latent-to-style maps
  double latent_stddev = 0.02;  // scale of sampled latents; style_scale * latent_stddev ~ 1
};

/// Desk-scale plane generator. Each plane p has a learned constant input C_p
/// and two modulated 1x1 layers:
///
///   h_p     = tanh((C_p * s1_p) W1_p + b1_p),   s1_p = w_A A1_p + 1
///   plane_p = (h_p * s2_p) W2_p + b2_p,         s2_p = w_B A2_p + 1
///
/// where w_A is the first half of the latent groups and w_B the second half
/// (both are the whole code when N = 1). Styles scale channels per plane.
template <class T>
class Synthesizer {
 public:
  static constexpr std::array<const char*, 3> kPlaneNames{"xy", "xz", "yz"};

  Synthesizer() = default;
  explicit Synthesizer(SynthesizerConfig cfg) : cfg_(cfg) {
    if (cfg_.groups < 1 || cfg_.group_dim < 1) throw ConfigError("synthesizer needs at least one latent group");
    if (cfg_.resolution < 2) throw ConfigError("synthesizer resolution must be at least 2");
  }

  const SynthesizerConfig& config() const { return cfg_; }
  Index groups_a() const { return cfg_.groups == 1 ? 1 : (cfg_.groups + 1) / 2; }
  Index groups_b_offset() const { return cfg_.groups == 1 ? 0 : groups_a(); }
  Index groups_b() const { return cfg_.groups == 1 ? 1 : cfg_.groups - groups_a(); }

  /// Latent code at the configured scale.
  LatentCode<T> random_latent(Rng& rng) const {
    return LatentCode<T>::random(cfg_.groups, cfg_.group_dim, rng, cfg_.latent_stddev);
  }

  /// Registers all tensors under "synth.*", randomly initialised from `rng`.
  void init_params(ParamStore<T>& s, Rng& rng) const {
    const double style_scale = cfg_.style_scale;
    const Index rr = cfg_.resolution * cfg_.resolution;
    const Index da = groups_a() * cfg_.group_dim, db = groups_b() * cfg_.group_dim;
    for (const char* p : kPlaneNames) {
      const std::string b = std::string("synth.") + p;
      s.add(b + ".const", random_normal<T>(rr, cfg_.input_channels, 0.5, rng));
      s.add(b + ".a1", random_normal<T>(da, cfg_.input_channels, style_scale / std::sqrt(double(da)), rng));
      s.add(b + ".w1", random_normal<T>(cfg_.input_channels, cfg_.hidden_channels,
                                        1.0 / std::sqrt(double(cfg_.input_channels)), rng));
      s.add(b + ".b1", Mat<T>::Zero(1, cfg_.hidden_channels));
      s.add(b + ".a2", random_normal<T>(db, cfg_.hidden_channels, style_scale / std::sqrt(double(db)), rng));
      s.add(b + ".w2", random_normal<T>(cfg_.hidden_channels, cfg_.channels,
                                        1.0 / std::sqrt(double(cfg_.hidden_channels)), rng));
      s.add(b + ".b2", Mat<T>::Zero(1, cfg_.channels));
    }
  }

  /// Registers all tensors under "synth.*" set to zero.
  void zero_params(ParamStore<T>& s) const {
    Rng rng(0);
    init_params(s, rng);
    for (auto& p : s.all())
      if (p.name.rfind("synth.", 0) == 0) p.value.setZero();
  }

  /// Taped generation: latent (1 x N*d_g) -> planes (3R^2 x M_f).
  ad::Var<T> forward(ad::Tape<T>& tape, ParamStore<T>& s, const ad::Var<T>& latent_flat) const {
    if (latent_flat.cols() != cfg_.groups * cfg_.group_dim || latent_flat.rows() != 1)
      throw ConfigError("synthesizer: latent has " + std::to_string(latent_flat.cols()) + " entries, expected " +
                        std::to_string(cfg_.groups * cfg_.group_dim));
    const Index dg = cfg_.group_dim;
    ad::Var<T> wa = ad::slice_cols(latent_flat, 0, groups_a() * dg);
    ad::Var<T> wb = ad::slice_cols(latent_flat, groups_b_offset() * dg, groups_b() * dg);
    std::vector<ad::Var<T>> planes;
    for (const char* p : kPlaneNames) {
      const std::string b = std::string("synth.") + p;
      ad::Var<T> s1 = ad::add_scalar(ad::matmul(wa, tape.param(s.at(b + ".a1"))), T(1));
      ad::Var<T> h = ad::mul_row(tape.param(s.at(b + ".const")), s1);
      h = ad::tanh(ad::affine(h, tape.param(s.at(b + ".w1")), tape.param(s.at(b + ".b1"))));
      ad::Var<T> s2 = ad::add_scalar(ad::matmul(wb, tape.param(s.at(b + ".a2"))), T(1));
      h = ad::mul_row(h, s2);
      planes.push_back(ad::affine(h, tape.param(s.at(b + ".w2")), tape.param(s.at(b + ".b2"))));
    }
    return ad::concat_rows<T>(std::span<const ad::Var<T>>(planes));
  }

  /// Untaped generation.
  TriPlaneSet<T> synthesize(const LatentCode<T>& w, const ParamStore<T>& s) const {
    w.validate();
    if (w.num_groups() != cfg_.groups || w.group_dim() != cfg_.group_dim)
      throw ConfigError("synthesize_triplanes: latent has " + std::to_string(w.num_groups()) + " groups of " +
                        std::to_string(w.group_dim()) + ", synthesizer expects " + std::to_string(cfg_.groups) +
                        " of " + std::to_string(cfg_.group_dim));
    ad::Tape<T> tape;
    tape.set_grad_enabled(false);
    ad::Var<T> planes = forward(tape, const_cast<ParamStore<T>&>(s), tape.constant(w.flat()));
    return TriPlaneSet<T>(planes.value(), cfg_.resolution, static_cast<T>(cfg_.extent));
  }

 private:
  SynthesizerConfig cfg_;
};

/// Free-function form of plane synthesis.
template <class T>
TriPlaneSet<T> synthesize_triplanes(const LatentCode<T>& w, const Synthesizer<T>& synth, const ParamStore<T>& params) {
  return synth.synthesize(w, params);
}

}  // namespace lenerf
