#pragma once

#include <functional>
#include <memory>
#include <string>

#include "lenerf/harness/pipeline.hpp"

namespace lenerf {

// Seeded steps shared by the CLI and the acceptance runs. Training runs in
// single precision.

struct PretrainedField {
  Generator<float> gen;
  LatentCode<float> base;
  PretrainResult result;
};

inline std::unique_ptr<PretrainedField> run_pretrain(RunConfig& cfg,
                                                     const std::function<void(const PretrainLogEntry&)>& on_log = nullptr) {
  cfg.resolve();
  auto out = std::make_unique<PretrainedField>();
  out->gen = Generator<float>::create(cfg.generator, mix_seed(cfg.seed, 0x6e));
  Rng rng(mix_seed(cfg.seed, 0x1a7));
  out->base = out->gen.synth.random_latent(rng);
  out->result = pretrain_field(out->gen, scene_of(cfg), out->base, cfg.pretrain, on_log);
  return out;
}

/// Fresh edit module; `index` is the position of the edit in its chain.
inline EditModule<float> make_edit(const RunConfig& cfg, const SynthesizerConfig& synth, std::size_t index,
                                   bool no_afn = false) {
  EditModule<float> e = EditModule<float>::create(cfg.edit, synth, mix_seed(cfg.seed, 0xed17 + index));
  e.force_mask_one = no_afn;
  return e;
}

/// Trains the top edit of `field`; returns the loss log.
inline std::vector<LossRow> run_edit(EditedField<float>& field, RunConfig& cfg,
                                     const std::function<void(const LossRow&)>& on_step = nullptr) {
  cfg.resolve();
  EditTrainer<float> trainer(field, cfg.train, vocabulary_of(cfg));
  trainer.train(cfg.train.steps, on_step);
  return trainer.log();
}

/// Metrics for a chain: IoU against the last edit's mask region, PSNR
/// outside the union of every edit's region, both against the source field.
inline MetricsReport evaluate_chain(EditedField<float>& field, const std::vector<std::string>& mask_prompts,
                                    const RunConfig& cfg, const AnalyticSceneSpec& scene) {
  const auto vocab = vocabulary_of(cfg);
  std::vector<int> uni;
  for (const auto& t : mask_prompts)
    for (int b : region_blobs(vocab, t, scene))
      if (std::find(uni.begin(), uni.end(), b) == uni.end()) uni.push_back(b);
  MetricsReport r = evaluate_edit(field, -1, field.top(), scene, region_blobs(vocab, mask_prompts.back(), scene), uni,
                                  cfg.eval);
  r.t_mask = mask_prompts.back();
  r.t_edit = cfg.train.prompts.t_edit;
  r.seed = cfg.seed;
  return r;
}

}  // namespace lenerf
