#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lenerf/field/pretrain.hpp"
#include "lenerf/guidance/encoders.hpp"
#include "lenerf/harness/metrics.hpp"
#include "lenerf/train/edit_trainer.hpp"

namespace lenerf {

/// Everything a CLI run needs, addressable by dotted keys.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string scene;  // scene file; empty selects the built-in two-blob scene
  std::string vocab;  // vocabulary file; empty selects the built-in one
  GeneratorConfig generator;
  PretrainConfig pretrain;
  EditConfig edit;
  TrainConfig train;
  EvalConfig eval;
  PoseDistribution poses;

  /// Propagates shared settings (seed, poses) into the sub-configs.
  void resolve() {
    pretrain.seed = seed;
    train.seed = seed;
    pretrain.poses = poses;
    train.poses = poses;
  }
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  N x{};
  in >> x;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

// Shortest text that reads back to the same value.
template <class N>
std::string show(N x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace detail

struct ConfigKey {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

/// Registry of every settable key bound to `c`.
inline std::vector<ConfigKey> config_keys(RunConfig& c) {
  std::vector<ConfigKey> keys;
  auto num = [&keys](const std::string& k, auto* p) {
    using N = std::remove_pointer_t<decltype(p)>;
    keys.push_back({k, [k, p](const std::string& v) { *p = detail::parse_number<N>(k, v); },
                    [p] { return detail::show(*p); }});
  };
  auto flag = [&keys](const std::string& k, bool* p) {
    keys.push_back({k, [k, p](const std::string& v) { *p = detail::parse_bool(k, v); },
                    [p] { return std::string(*p ? "true" : "false"); }});
  };
  auto str = [&keys](const std::string& k, std::string* p) {
    keys.push_back({k, [p](const std::string& v) { *p = v; }, [p] { return *p; }});
  };
  auto widths = [&keys](const std::string& k, std::vector<Index>* p) {
    keys.push_back({k,
                    [k, p](const std::string& v) {
                      p->clear();
                      for (const auto& s : detail::split(v, ',')) p->push_back(detail::parse_number<Index>(k, s));
                      if (p->empty()) throw ConfigError("key '" + k + "': needs at least one width");
                    },
                    [p] {
                      std::string s;
                      for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + std::to_string((*p)[i]);
                      return s;
                    }});
  };

  num("seed", &c.seed);
  str("scene", &c.scene);
  str("vocab", &c.vocab);

  auto& g = c.generator;
  num("generator.resolution", &g.synth.resolution);
  num("generator.channels", &g.synth.channels);
  num("generator.input_channels", &g.synth.input_channels);
  num("generator.hidden_channels", &g.synth.hidden_channels);
  num("generator.groups", &g.synth.groups);
  num("generator.group_dim", &g.synth.group_dim);
  num("generator.extent", &g.synth.extent);
  num("generator.style_scale", &g.synth.style_scale);
  num("generator.latent_stddev", &g.synth.latent_stddev);
  num("generator.decoder_hidden", &g.decoder_hidden);

  auto& p = c.pretrain;
  num("pretrain.steps", &p.steps);
  num("pretrain.rays_per_step", &p.rays_per_step);
  num("pretrain.samples", &p.samples);
  num("pretrain.eval_samples", &p.eval_samples);
  num("pretrain.view_resolution", &p.view_resolution);
  num("pretrain.train_views", &p.train_views);
  num("pretrain.holdout_views", &p.holdout_views);
  num("pretrain.eval_every", &p.eval_every);
  num("pretrain.lr", &p.lr);
  num("pretrain.lr_final", &p.lr_final);
  num("pretrain.oracle_steps", &p.oracle_steps);

  num("poses.radius", &c.poses.radius);
  num("poses.azimuth_min", &c.poses.azimuth_min);
  num("poses.azimuth_max", &c.poses.azimuth_max);
  num("poses.elevation_min", &c.poses.elevation_min);
  num("poses.elevation_max", &c.poses.elevation_max);
  num("poses.fov", &c.poses.fov);

  auto& e = c.edit;
  widths("edit.lrm_hidden", &e.lrm_hidden);
  widths("edit.afn_hidden", &e.afn_hidden);
  widths("edit.dn_hidden", &e.dn_hidden);
  num("edit.afn_bias_init", &e.afn_bias_init);
  num("edit.gamma_d", &e.gamma_d);
  flag("edit.deformation", &e.deformation);

  auto& t = c.train;
  num("train.lambda_mask", &t.weights.mask);
  num("train.lambda_tv", &t.weights.tv);
  num("train.lambda_sparsity", &t.weights.sparsity);
  num("train.lambda_clip_plus", &t.weights.clip_plus);
  num("train.lambda_l2", &t.clip.lambda_l2);
  num("train.lambda_id", &t.clip.lambda_id);
  num("train.k_top_fraction", &t.k_top_fraction);
  num("train.steps", &t.steps);
  num("train.lr_lrm", &t.lr_lrm);
  num("train.lr_afn", &t.lr_afn);
  num("train.lr_dn", &t.lr_dn);
  num("train.lr_final_fraction", &t.lr_final_fraction);
  num("train.label_interval", &t.label_interval);
  num("train.views_per_step", &t.views_per_step);
  num("train.pool_views", &t.pool_views);
  num("train.view_resolution", &t.view_resolution);
  num("train.samples", &t.samples);
  num("train.label_resolution", &t.label_resolution);
  num("train.label_samples", &t.label_samples);
  num("train.tv_grid", &t.tv_grid);

  str("guidance.encoder", &t.encoder);
  num("guidance.patch", &t.patch);
  num("guidance.window", &t.window);
  num("guidance.temperature", &t.clip.temperature);
  flag("guidance.augment", &t.clip.augment.enabled);
  num("guidance.crop_area", &t.clip.augment.crop_area);
  num("guidance.flip_prob", &t.clip.augment.flip_prob);

  str("prompt.t_edit", &t.prompts.t_edit);
  str("prompt.t_src", &t.prompts.t_src);
  str("prompt.t_mask", &t.t_mask);
  keys.push_back({"prompt.distractors", [&t](const std::string& v) { t.prompts.distractors = detail::split(v, ','); },
                  [&t] {
                    std::string s;
                    for (std::size_t i = 0; i < t.prompts.distractors.size(); ++i)
                      s += (i ? "," : "") + t.prompts.distractors[i];
                    return s;
                  }});

  num("eval.view_resolution", &c.eval.view_resolution);
  num("eval.samples", &c.eval.samples);
  num("eval.radius", &c.eval.radius);
  num("eval.fov", &c.eval.fov);
  keys.push_back({"eval.views",
                  [&c](const std::string& v) {
                    c.eval.views.clear();
                    for (const auto& s : detail::split(v, ' ')) {
                      const auto ae = detail::split(s, ':');
                      if (ae.size() != 2) throw ConfigError("key 'eval.views': expected 'az:el az:el ...'");
                      c.eval.views.emplace_back(detail::parse_number<double>("eval.views", ae[0]),
                                                detail::parse_number<double>("eval.views", ae[1]));
                    }
                    if (c.eval.views.empty()) throw ConfigError("key 'eval.views': needs at least one view");
                  },
                  [&c] {
                    std::string s;
                    for (std::size_t i = 0; i < c.eval.views.size(); ++i)
                      s += (i ? " " : "") + detail::show(c.eval.views[i].first) + ":" +
                           detail::show(c.eval.views[i].second);
                    return s;
                  }});
  return keys;
}

inline std::vector<std::string> valid_keys(RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& k : config_keys(c)) out.push_back(k.key);
  return out;
}

/// Sets one dotted key; unknown keys raise ConfigError listing the valid ones.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& k : config_keys(c))
    if (k.key == key) {
      k.set(value);
      return;
    }
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : valid_keys(c)) msg += "\n  " + k;
  throw ConfigError(msg);
}

inline std::string get_key(RunConfig& c, const std::string& key) {
  for (auto& k : config_keys(c))
    if (k.key == key) return k.get();
  throw ConfigError("unknown config key '" + key + "'");
}

/// "key=value" as given to --set.
inline void apply_override(RunConfig& c, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + kv + "' must be key=value");
  set_key(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

/// INI text: "[section]" headers, "key = value" lines, '#' or ';' comments.
/// A key inside [section] is addressed as "section.key".
inline void apply_ini(RunConfig& c, std::istream& in) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    set_key(c, section.empty() ? key : section + "." + key, detail::trim(line.substr(eq + 1)));
  }
}

inline void load_ini(RunConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  apply_ini(c, f);
}

/// Resolved config as INI, one key per line, grouped by section.
inline std::string to_ini(RunConfig& c) {
  std::ostringstream o;
  std::string section = "\x01";
  for (auto& k : config_keys(c)) {
    const auto dot = k.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? k.key : k.key.substr(dot + 1);
    if (sec != section) {
      if (!sec.empty()) o << "\n[" << sec << "]\n";
      section = sec;
    }
    o << name << " = " << k.get() << "\n";
  }
  return o.str();
}

}  // namespace lenerf
