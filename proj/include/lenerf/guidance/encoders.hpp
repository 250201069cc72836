#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lenerf/field/scene.hpp"
#include "lenerf/guidance/transformer.hpp"

namespace lenerf {

enum class PromptRegion { Left, Right, All, Axis };

/// One vocabulary line: `prompt | left|right|all | r g b` or `prompt | axis | k`.
struct VocabEntry {
  std::string prompt;
  PromptRegion region = PromptRegion::All;
  Vec3 color = Vec3::Zero();
  int axis = 0;
};

struct VocabularyError : ConfigError {
  using ConfigError::ConfigError;
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}
}  // namespace detail

inline std::vector<VocabEntry> parse_vocabulary(std::istream& in) {
  std::vector<VocabEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> parts;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, '|');) parts.push_back(detail::trim(part));
    auto fail = [&](const std::string& why) {
      throw ConfigError("vocabulary line " + std::to_string(lineno) + ": " + why);
    };
    if (parts.size() != 3 || parts[0].empty()) fail("expected 'prompt | region | values'");
    VocabEntry e;
    e.prompt = parts[0];
    std::istringstream vs(parts[2]);
    if (parts[1] == "axis") {
      e.region = PromptRegion::Axis;
      if (!(vs >> e.axis) || e.axis < 0) fail("axis needs a non-negative index");
    } else {
      if (parts[1] == "left")
        e.region = PromptRegion::Left;
      else if (parts[1] == "right")
        e.region = PromptRegion::Right;
      else if (parts[1] == "all")
        e.region = PromptRegion::All;
      else
        fail("unknown region '" + parts[1] + "'");
      if (!(vs >> e.color.x() >> e.color.y() >> e.color.z())) fail("expected three color values");
    }
    out.push_back(e);
  }
  return out;
}

inline std::vector<VocabEntry> load_vocabulary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open vocabulary '" + path + "'");
  return parse_vocabulary(f);
}

/// Prompts used by the default two-blob experiments.
inline std::vector<VocabEntry> default_vocabulary() {
  std::istringstream s(
      "left blob | left | 0.15 0.3 0.9\n"
      "right blob | right | 0.9 0.2 0.15\n"
      "red left blob | left | 1 0 0\n"
      "green right blob | right | 0 1 0\n"
      "blue left blob | left | 0 0 1\n"
      "yellow left blob | left | 1 1 0\n"
      "purple left blob | left | 0.6 0 1\n"
      "cyan right blob | right | 0 1 1\n"
      "magenta right blob | right | 1 0 1\n"
      "two blobs | all | 0.5 0.5 0.5\n"
      "red | all | 1 0 0\n"
      "green | all | 0 1 0\n"
      "blue | all | 0 0 1\n");
  return parse_vocabulary(s);
}

/// Encoder backed by a TransformerEncoder; keeps the attention record of the
/// latest forward pass for relevance propagation.
template <class T>
class TransformerGuidance : public GuidanceEncoder<T> {
 public:
  Index embed_dim() const override { return net_.spec().embed_dim; }
  Index image_height() const override { return net_.spec().image_height; }
  Index image_width() const override { return net_.spec().image_width; }

  ad::Var<T> embed_image(ad::Tape<T>& tape, const ad::Var<T>& image) override {
    return net_.forward(tape, image, &record_);
  }
  using GuidanceEncoder<T>::embed_image;

  TransformerEncoder<T>& transformer() { return net_; }
  const AttentionRecord<T>& last_record() const { return record_; }

 protected:
  TransformerEncoder<T> net_;
  AttentionRecord<T> record_;
};

/// Analytic CLIP stand-in. A single attention layer whose two heads pool
/// patch chroma (rgb minus its mean) under soft left / right windows of the
/// image; the embedding is the normalised concatenation of both pools.
/// Prompts embed a color's chroma into the left, right or both slots.
/// A zero image has zero statistics and embeds to the uniform vector.
template <class T>
class SyntheticOracleEncoder : public TransformerGuidance<T> {
 public:
  static constexpr Index kDim = 12;

  SyntheticOracleEncoder(std::vector<VocabEntry> vocab, Index height = 64, Index width = 64, Index patch = 4,
                         double window = 0.1)
      : vocab_(std::move(vocab)) {
    TransformerSpec s;
    s.image_height = height;
    s.image_width = width;
    s.patch = patch;
    s.dim = kDim;
    s.heads = 2;
    s.head_dim = 1;
    s.value_dim = 3;
    s.layers = 1;
    s.embed_dim = 6;
    s.mlp = false;
    this->net_ = TransformerEncoder<T>(s);
    this->net_.allocate();
    auto& p = this->net_.params();
    const Index pp = patch * patch;
    Mat<T>& we = p.at("enc.embed.w").value;
    for (Index k = 0; k < pp; ++k)
      for (Index c = 0; c < 3; ++c)
        for (Index d = 0; d < 3; ++d) we(k * 3 + c, d) = static_cast<T>(((c == d ? 1.0 : 0.0) - 1.0 / 3.0) / double(pp));
    Mat<T>& pos = p.at("enc.pos").value;
    const Index px = s.patches_x();
    for (Index t = 0; t < pos.rows(); ++t) {
      const double x = 2.0 * (static_cast<double>(t % px) + 0.5) / static_cast<double>(px) - 1.0;
      pos(t, 3) = static_cast<T>(log_sigmoid(-x / window));
      pos(t, 4) = static_cast<T>(log_sigmoid(x / window));
    }
    Mat<T>& cls = p.at("enc.cls").value;
    cls(0, 3) = cls(0, 4) = T(-30);
    cls(0, 5) = T(1);
    for (Index h = 0; h < 2; ++h) {
      p.at(TransformerEncoder<T>::name(0, h, "q")).value(5, 0) = T(1);
      p.at(TransformerEncoder<T>::name(0, h, "k")).value(3 + h, 0) = T(1);
      Mat<T>& v = p.at(TransformerEncoder<T>::name(0, h, "v")).value;
      for (Index d = 0; d < 3; ++d) v(d, d) = T(1);
    }
    Mat<T>& o = p.at(TransformerEncoder<T>::name(0, "o")).value;
    Mat<T>& proj = p.at("enc.proj").value;
    for (Index d = 0; d < 6; ++d) {
      o(d, 6 + d) = T(1);
      proj(6 + d, d) = T(1);
    }
  }

  const std::vector<VocabEntry>& vocabulary() const { return vocab_; }

  Mat<T> embed_text(const std::string& prompt) const override {
    for (const auto& e : vocab_) {
      if (e.prompt != prompt) continue;
      Mat<T> v = Mat<T>::Zero(1, 6);
      if (e.region == PromptRegion::Axis) {
        if (e.axis >= 6) throw VocabularyError("prompt '" + prompt + "': axis index out of range");
        v(0, e.axis) = T(1);
        return v;
      }
      const Vec3 chroma = e.color - Vec3::Constant(e.color.mean());
      for (Index d = 0; d < 3; ++d) {
        if (e.region != PromptRegion::Right) v(0, d) = static_cast<T>(chroma(d));
        if (e.region != PromptRegion::Left) v(0, 3 + d) = static_cast<T>(chroma(d));
      }
      const T n = v.norm();
      if (n < T(1e-12)) return Mat<T>::Constant(1, 6, T(1) / std::sqrt(T(6)));
      return v / n;
    }
    throw VocabularyError("prompt '" + prompt + "' is not in the vocabulary");
  }

 private:
  static double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
  std::vector<VocabEntry> vocab_;
};

/// Randomly initialised transformer; prompts map to pseudo-random unit
/// vectors seeded by a hash of the text.
template <class T>
class ToyTransformerEncoder : public TransformerGuidance<T> {
 public:
  explicit ToyTransformerEncoder(TransformerSpec spec, std::uint64_t seed = 1) : seed_(seed) {
    this->net_ = TransformerEncoder<T>(spec);
    this->net_.allocate();
    Rng rng(seed);
    this->net_.randomize(rng);
  }

  Mat<T> embed_text(const std::string& prompt) const override {
    if (prompt.empty()) throw VocabularyError("empty prompt");
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : prompt) h = (h ^ c) * 1099511628211ull;
    Rng rng(mix_seed(seed_, h));
    Mat<T> v = random_normal<T>(1, this->embed_dim(), 1.0, rng);
    return v / v.norm();
  }

 private:
  std::uint64_t seed_;
};

/// `kind` is "synthetic_oracle" or "toy_transformer".
template <class T>
std::unique_ptr<TransformerGuidance<T>> make_encoder(const std::string& kind, const std::vector<VocabEntry>& vocab,
                                                     Index height, Index width, Index patch, std::uint64_t seed,
                                                     double window = 0.1) {
  if (kind == "synthetic_oracle") return std::make_unique<SyntheticOracleEncoder<T>>(vocab, height, width, patch, window);
  if (kind == "toy_transformer") {
    TransformerSpec s;
    s.image_height = height;
    s.image_width = width;
    s.patch = patch;
    return std::make_unique<ToyTransformerEncoder<T>>(s, seed);
  }
  throw ConfigError("unknown guidance encoder '" + kind + "' (valid: synthetic_oracle, toy_transformer)");
}

}  // namespace lenerf
