// lenerf command line: pretrain, edit-train, render, render-mask, eval,
// gradcheck, dump-pseudolabels.
//
// Exit codes: 0 ok, 1 usage/config, 2 numeric failure, 3 assertion.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lenerf/harness/experiment.hpp"
#include "lenerf/render/image_io.hpp"
#include "lenerf/train/gradcheck_suites.hpp"

namespace fs = std::filesystem;
using namespace lenerf;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string run;
};

void add_common(CLI::App* c, Common& o, bool with_run) {
  c->add_option("--config", o.config, "INI config file");
  c->add_option("--set", o.sets, "override, key=value (repeatable)");
  c->add_option("--seed", o.seed, "global seed");
  if (with_run) c->add_option("--run", o.run, "run directory")->required();
}

RunConfig resolve(const Common& o) {
  RunConfig c;
  if (!o.config.empty()) load_ini(c, o.config);
  for (const auto& s : o.sets) apply_override(c, s);
  if (o.seed) c.seed = *o.seed;
  c.resolve();
  return c;
}

void open_run(const std::string& dir, RunConfig& c) {
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "config.ini") << to_ini(c);
}

CameraPose parse_pose(const std::string& s, const RunConfig& c) {
  double az = 0, el = 0, radius = c.eval.radius, fov = c.eval.fov;
  for (const auto& kv : detail::split(s, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("pose entry '" + kv + "' must be key=value");
    const std::string k = kv.substr(0, eq);
    const double v = detail::parse_number<double>("pose." + k, kv.substr(eq + 1));
    if (k == "az") az = v;
    else if (k == "el") el = v;
    else if (k == "radius") radius = v;
    else if (k == "fov") fov = v;
    else throw ConfigError("unknown pose key '" + k + "'; valid: az, el, radius, fov");
  }
  return orbit_pose(az, el, radius, fov);
}

int cmd_pretrain(const Common& o) {
  RunConfig c = resolve(o);
  open_run(o.run, c);
  std::ofstream log(fs::path(o.run) / "pretrain.csv");
  log << "step,train_loss,holdout_mse,holdout_psnr\n" << std::setprecision(9);
  auto f = run_pretrain(c, [&](const PretrainLogEntry& e) {
    log << e.step << ',' << e.train_loss << ',' << e.holdout_mse << ',' << e.holdout_psnr << "\n";
    std::cout << "step " << e.step << "  holdout PSNR " << e.holdout_psnr << " dB" << std::endl;
  });
  save_generator((fs::path(o.run) / "generator.ckpt").string(), f->gen, f->base, c);
  std::ofstream(fs::path(o.run) / "summary.txt") << "final_holdout_psnr " << f->result.final_psnr << "\n";
  std::cout << "final held-out PSNR " << f->result.final_psnr << " dB\n";
  return 0;
}

int cmd_edit_train(const Common& o, const std::string& ckpt, bool no_afn) {
  RunConfig c = resolve(o);
  auto chain = load_any<float>(ckpt);
  // Network shapes come from the generator checkpoint.
  c.generator = chain->generator.config.generator;
  if (c.scene.empty()) c.scene = chain->generator.config.scene;
  open_run(o.run, c);
  EditModule<float> e = make_edit(c, c.generator.synth, chain->edits.size(), no_afn);
  chain->field->push(e);
  const auto rows = run_edit(*chain->field, c, [](const LossRow& r) {
    if (r.step % 100 == 0) std::cout << "step " << r.step << "  L_CLIP+ " << r.total_lrm << "  L_AFN " << r.total_afn << std::endl;
  });
  write_loss_csv((fs::path(o.run) / "losses.csv").string(), rows);
  const bool chained = !chain->edits.empty();
  save_edit((fs::path(o.run) / "edit.ckpt").string(), e, c, chain->generator.path, chained ? ckpt : "");
  std::cout << "wrote " << (fs::path(o.run) / "edit.ckpt").string() << "\n";
  return 0;
}

int cmd_render(const Common& o, const std::string& ckpt, const std::string& pose, const std::string& out, int level,
               bool mask) {
  RunConfig c = resolve(o);
  auto chain = load_any<float>(ckpt);
  const int top = chain->field->top();
  if (level < -1 || level > top) level = top;
  if (mask && level < 0) throw ConfigError("render-mask needs an edit checkpoint");
  const CameraPose cam = parse_pose(pose, c);
  const Index h = c.eval.view_resolution;
  EditRender<float> r = render_edit(*chain->field, level, cam, h, h, c.eval.samples);
  if (mask) write_pgm(out, r.mask);
  else write_ppm(out, r.rgb);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_eval(const Common& o, bool ablate) {
  const fs::path run(o.run);
  if (!fs::exists(run / "config.ini")) throw ConfigError("run directory '" + o.run + "' has no config.ini");
  RunConfig rc;
  load_ini(rc, (run / "config.ini").string());
  for (const auto& s : o.sets) apply_override(rc, s);
  auto chain = load_chain<float>((run / "edit.ckpt").string());
  if (ablate)
    for (auto& e : chain->edits) e.force_mask_one = true;
  chain->field->refresh();
  std::vector<std::string> masks;
  for (auto& ec : chain->edit_configs) masks.push_back(ec.train.t_mask);
  MetricsReport r = evaluate_chain(*chain->field, masks, rc, scene_of(rc));
  const std::string tag = ablate ? "_no_afn" : "";
  std::ofstream(run / ("metrics" + tag + ".csv")) << r.csv();
  std::ofstream(run / ("metrics" + tag + ".txt")) << r.summary();
  std::cout << r.summary();
  return 0;
}

int cmd_gradcheck(const std::string& module, std::uint64_t seed) {
  const GradCheckResult r = run_gradcheck(module, seed);
  std::cout << "module " << module << "\nentries " << r.checked << "\nmax_rel_error " << r.max_rel_error
            << "\nmax_abs_error " << r.max_abs_error << "\nworst " << r.worst << "\n";
  const bool ok = r.max_rel_error < 1e-4;
  std::cout << (ok ? "PASS" : "FAIL") << " (threshold 1e-4)\n";
  return ok ? 0 : 2;
}

int cmd_dump_labels(const Common& o, const std::string& ckpt, int count) {
  RunConfig c = resolve(o);
  auto chain = load_any<float>(ckpt);
  c.generator = chain->generator.config.generator;
  open_run(o.run, c);
  EditModule<float> e = make_edit(c, c.generator.synth, chain->edits.size());
  chain->field->push(e);
  EditTrainer<float> tr(*chain->field, c.train, vocabulary_of(c));
  tr.prepare();
  const int n = std::min<int>(count, static_cast<int>(tr.views().size()));
  for (int i = 0; i < n; ++i) {
    const auto& v = tr.views()[static_cast<std::size_t>(i)];
    char name[32];
    std::snprintf(name, sizeof name, "label_%02d.pgm", i);
    const Index h = c.train.view_resolution;
    write_pgm((fs::path(o.run) / name).string(), Image<float>(h, h, v.label));
    std::snprintf(name, sizeof name, "source_%02d.ppm", i);
    write_ppm((fs::path(o.run) / name).string(), Image<float>(2 * h, 2 * h, v.source_rgb));
  }
  std::cout << "wrote " << n << " pseudo-labels to " << o.run << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized edits of a feature field with text guidance"};
  app.require_subcommand(1);

  Common pre, edit, ren, msk, ev, dump;
  std::string ckpt, pose, out, module = "afn";
  int level = 1 << 20, count = 8;
  bool no_afn = false, ablate = false;
  std::uint64_t gc_seed = 1;

  auto* c_pre = app.add_subcommand("pretrain", "fit the source field to the analytic scene");
  add_common(c_pre, pre, true);

  auto* c_edit = app.add_subcommand("edit-train", "train one edit on top of a generator or edit checkpoint");
  add_common(c_edit, edit, true);
  c_edit->add_option("--ckpt", ckpt, "generator or edit checkpoint")->required();
  c_edit->add_flag("--no-afn", no_afn, "ablation: mask forced to 1");

  auto* c_ren = app.add_subcommand("render", "render RGB to a PPM");
  add_common(c_ren, ren, false);
  c_ren->add_option("--ckpt", ckpt)->required();
  c_ren->add_option("--pose", pose, "az=..,el=..[,radius=..,fov=..]")->required();
  c_ren->add_option("--out", out)->required();
  c_ren->add_option("--level", level, "edit level, -1 for the source (default: last)");

  auto* c_msk = app.add_subcommand("render-mask", "render the edit mask to a PGM");
  add_common(c_msk, msk, false);
  c_msk->add_option("--ckpt", ckpt)->required();
  c_msk->add_option("--pose", pose)->required();
  c_msk->add_option("--out", out)->required();
  c_msk->add_option("--level", level);

  auto* c_ev = app.add_subcommand("eval", "metrics for an edit-train run directory");
  add_common(c_ev, ev, true);
  c_ev->add_flag("--no-afn", ablate, "evaluate with every mask forced to 1");

  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::string valid;
  for (const auto& m : gradcheck_modules()) valid += (valid.empty() ? "" : ", ") + m;
  c_gc->add_option("--module", module, valid);
  c_gc->add_option("--seed", gc_seed);

  auto* c_dump = app.add_subcommand("dump-pseudolabels", "write relevance pseudo-labels for the training views");
  add_common(c_dump, dump, true);
  c_dump->add_option("--ckpt", ckpt)->required();
  c_dump->add_option("--count", count);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*c_pre) return cmd_pretrain(pre);
    if (*c_edit) return cmd_edit_train(edit, ckpt, no_afn);
    if (*c_ren) return cmd_render(ren, ckpt, pose, out, level, false);
    if (*c_msk) return cmd_render(msk, ckpt, pose, out, level, true);
    if (*c_ev) return cmd_eval(ev, ablate);
    if (*c_gc) return cmd_gradcheck(module, gc_seed);
    if (*c_dump) return cmd_dump_labels(dump, ckpt, count);
  } catch (const FrozenParameterError& e) {
    std::cerr << "assertion: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "assertion: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
