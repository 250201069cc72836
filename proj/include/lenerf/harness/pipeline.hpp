#pragma once

#include <algorithm>
#include <deque>
#include <memory>
#include <filesystem>
#include <string>
#include <vector>

#include "lenerf/harness/checkpoint.hpp"
#include "lenerf/harness/config.hpp"

namespace lenerf {

// Checkpoints carry the config keys needed to rebuild their networks as
// "config.<key>" meta entries.

namespace detail {
inline void put_config(Checkpoint& c, RunConfig& cfg, const std::string& prefix) {
  for (auto& k : config_keys(cfg))
    if (k.key.rfind(prefix, 0) == 0) c.meta["config." + k.key] = k.get();
}
inline void get_config(const Checkpoint& c, RunConfig& cfg) {
  for (const auto& [k, v] : c.meta)
    if (k.rfind("config.", 0) == 0) set_key(cfg, k.substr(7), v);
}
inline std::string absolute(const std::string& p) { return std::filesystem::absolute(p).lexically_normal().string(); }
}  // namespace detail

inline AnalyticSceneSpec scene_of(const RunConfig& c) { return c.scene.empty() ? two_blob_scene() : load_scene(c.scene); }

inline std::vector<VocabEntry> vocabulary_of(const RunConfig& c) {
  return c.vocab.empty() ? default_vocabulary() : load_vocabulary(c.vocab);
}

/// Scene blobs named by a mask prompt: "left"/"right" regions select the
/// blobs of that name, "all" selects both.
inline std::vector<int> region_blobs(const std::vector<VocabEntry>& vocab, const std::string& t_mask,
                                     const AnalyticSceneSpec& scene) {
  for (const auto& v : vocab)
    if (v.prompt == t_mask) {
      switch (v.region) {
        case PromptRegion::Left: return {scene.blob_index("left")};
        case PromptRegion::Right: return {scene.blob_index("right")};
        case PromptRegion::All: return {scene.blob_index("left"), scene.blob_index("right")};
        default: throw ConfigError("mask prompt '" + t_mask + "' does not name a scene region");
      }
    }
  throw VocabularyError("prompt '" + t_mask + "' is not in the vocabulary");
}

template <class T>
void save_generator(const std::string& path, const Generator<T>& gen, const LatentCode<T>& base, RunConfig& cfg) {
  Checkpoint c;
  detail::put_config(c, cfg, "generator.");
  c.meta["scene"] = cfg.scene.empty() ? "" : detail::absolute(cfg.scene);
  c.add(gen.params);
  c.put("latent.base", base.groups);
  save_checkpoint(path, c);
}

template <class T>
struct LoadedGenerator {
  Generator<T> gen;
  LatentCode<T> base;
  RunConfig config;  // generator.* and scene as stored
  std::string path;
};

template <class T>
LoadedGenerator<T> load_generator(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  for (const char* s : {"synth", "decoder", "upsampler", "latent"})
    if (!c.has_section(s)) throw CheckpointError("'" + path + "' has no '" + s + "' section; not a generator checkpoint");
  LoadedGenerator<T> g;
  detail::get_config(c, g.config);
  if (auto it = c.meta.find("scene"); it != c.meta.end()) g.config.scene = it->second;
  g.gen = Generator<T>::create(g.config.generator, 0);
  c.load_into(g.gen.params);
  g.base = LatentCode<T>(c.get("latent.base").template cast<T>());
  g.path = detail::absolute(path);
  return g;
}

template <class T>
void save_edit(const std::string& path, EditModule<T>& e, RunConfig& cfg, const std::string& generator_path,
               const std::string& previous_edit) {
  Checkpoint c;
  detail::put_config(c, cfg, "edit.");
  detail::put_config(c, cfg, "prompt.");
  c.meta["generator"] = detail::absolute(generator_path);
  c.meta["previous"] = previous_edit.empty() ? "" : detail::absolute(previous_edit);
  c.meta["force_mask_one"] = e.force_mask_one ? "true" : "false";
  c.add(e.params);
  save_checkpoint(path, c);
}

/// An edit chain with its generator. The field points into this object, so
/// chains live behind a unique_ptr and are never moved.
template <class T>
struct LoadedChain {
  LoadedChain() = default;
  LoadedChain(const LoadedChain&) = delete;
  LoadedChain& operator=(const LoadedChain&) = delete;

  LoadedGenerator<T> generator;
  std::deque<EditModule<T>> edits;
  std::vector<RunConfig> edit_configs;  // edit.* and prompt.* per edit
  std::unique_ptr<EditedField<T>> field;

  void rebuild_field() {
    field = std::make_unique<EditedField<T>>(generator.gen, generator.base);
    for (auto& e : edits) field->push(e);
  }
};

inline std::string meta_or(const Checkpoint& c, const std::string& k) {
  auto it = c.meta.find(k);
  return it == c.meta.end() ? "" : it->second;
}

/// Loads `edit_path` and every edit before it, oldest first.
template <class T>
std::unique_ptr<LoadedChain<T>> load_chain(const std::string& edit_path) {
  std::vector<Checkpoint> cks;
  std::string p = edit_path;
  while (!p.empty()) {
    cks.push_back(load_checkpoint(p));
    for (const char* s : {"lrm", "afn", "dn"})
      if (!cks.back().has_section(s)) throw CheckpointError("'" + p + "' has no '" + s + "' section; not an edit checkpoint");
    p = meta_or(cks.back(), "previous");
    if (cks.size() > 64) throw CheckpointError("edit chain too long (cycle?)");
  }
  std::reverse(cks.begin(), cks.end());
  auto ch = std::make_unique<LoadedChain<T>>();
  ch->generator = load_generator<T>(meta_or(cks.front(), "generator"));
  for (const auto& c : cks) {
    RunConfig rc;
    detail::get_config(c, rc);
    EditModule<T> e = EditModule<T>::create(rc.edit, ch->generator.gen.config.synth, 0);
    c.load_into(e.params);
    e.force_mask_one = meta_or(c, "force_mask_one") == "true";
    ch->edits.push_back(std::move(e));
    ch->edit_configs.push_back(rc);
  }
  ch->rebuild_field();
  return ch;
}

/// Generator checkpoint alone, as a chain with no edits.
template <class T>
std::unique_ptr<LoadedChain<T>> load_source(const std::string& generator_path) {
  auto ch = std::make_unique<LoadedChain<T>>();
  ch->generator = load_generator<T>(generator_path);
  ch->rebuild_field();
  return ch;
}

/// Either kind of checkpoint.
template <class T>
std::unique_ptr<LoadedChain<T>> load_any(const std::string& path) {
  const Checkpoint c = load_checkpoint(path);
  return c.has_section("lrm") ? load_chain<T>(path) : load_source<T>(path);
}

}  // namespace lenerf
