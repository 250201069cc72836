#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lenerf/edit/edited_field.hpp"
#include "lenerf/render/oracle.hpp"

namespace lenerf {

inline constexpr double kPsnrCap = 99.0;

/// PSNR over pixels where `region` is 0. Images in [0, 1], region binary and
/// the same height and width. No error, or no outside pixels, gives the cap.
template <class T>
double masked_psnr(const Image<T>& a, const Image<T>& b, const Image<double>& region) {
  if (a.height != b.height || a.width != b.width || a.pixels.cols() != b.pixels.cols())
    throw InputError("masked_psnr: image shapes differ");
  if (region.height != a.height || region.width != a.width || region.pixels.cols() != 1)
    throw InputError("masked_psnr: region mask must match the image size");
  double se = 0;
  Index n = 0;
  for (Index r = 0; r < a.pixels.rows(); ++r) {
    const double g = region.pixels(r, 0);
    if (g != 0.0 && g != 1.0) throw InputError("masked_psnr: region mask must be binary");
    if (g != 0.0) continue;
    for (Index c = 0; c < a.pixels.cols(); ++c) {
      const double d = double(a.pixels(r, c)) - double(b.pixels(r, c));
      se += d * d;
    }
    n += a.pixels.cols();
  }
  if (n == 0 || se == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(double(n) / se));
}

/// IoU of the rendered mask binarised at 0.5 and a binary region.
template <class T>
double mask_iou(const Image<T>& rendered, const Image<double>& region) {
  if (rendered.height != region.height || rendered.width != region.width || rendered.pixels.cols() != 1 ||
      region.pixels.cols() != 1)
    throw InputError("mask_iou: masks must be single-channel and the same size");
  Index inter = 0, uni = 0;
  for (Index r = 0; r < rendered.pixels.rows(); ++r) {
    const bool a = double(rendered.pixels(r, 0)) >= 0.5;
    const bool b = region.pixels(r, 0) >= 0.5;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

/// Mean of (edited - source) red channel over region pixels.
template <class T>
double delta_red(const Image<T>& source, const Image<T>& edited, const Image<double>& region) {
  double acc = 0;
  Index n = 0;
  for (Index r = 0; r < source.pixels.rows(); ++r)
    if (region.pixels(r, 0) >= 0.5) {
      acc += double(edited.pixels(r, 0)) - double(source.pixels(r, 0));
      ++n;
    }
  return n == 0 ? 0.0 : acc / double(n);
}

struct ViewMetrics {
  double azimuth = 0, elevation = 0;
  double psnr_outside = 0, iou = 0, delta_red = 0;
};

struct MetricsReport {
  std::string t_edit, t_mask;
  std::uint64_t seed = 0;
  std::vector<ViewMetrics> views;
  double masked_psnr_outside = 0;  // mean over views
  double mask_iou = 0;
  double delta_red = 0;

  std::string csv() const {
    std::ostringstream s;
    s << std::setprecision(9) << "view,azimuth,elevation,masked_psnr_outside,mask_iou,delta_red\n";
    for (std::size_t i = 0; i < views.size(); ++i)
      s << i << ',' << views[i].azimuth << ',' << views[i].elevation << ',' << views[i].psnr_outside << ','
        << views[i].iou << ',' << views[i].delta_red << "\n";
    s << "mean,,," << masked_psnr_outside << ',' << mask_iou << ',' << delta_red << "\n";
    return s.str();
  }

  std::string summary() const {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << "t_edit: " << t_edit << "\nt_mask: " << t_mask << "\nseed: " << seed
      << "\nviews: " << views.size() << "\nmasked_psnr_outside: " << masked_psnr_outside << " dB\nmask_iou: " << mask_iou
      << "\ndelta_red: " << delta_red << "\n";
    return s.str();
  }
};

struct EvalConfig {
  std::vector<std::pair<double, double>> views{{0.0, 0.0}, {-0.35, 0.1}, {0.35, -0.1}, {0.2, 0.2}};
  double radius = 3.0, fov = 0.8;
  Index view_resolution = 32;
  Index samples = 48;
};

/// Compares the field at `edit_level` against `source_level` on the eval
/// views. PSNR and delta_red use the union of `psnr_blobs` at output
/// resolution; IoU compares the rendered mask of `edit_level` with
/// `mask_blobs` at view resolution.
template <class T>
MetricsReport evaluate_edit(EditedField<T>& field, int source_level, int edit_level, const AnalyticSceneSpec& scene,
                            const std::vector<int>& mask_blobs, const std::vector<int>& psnr_blobs,
                            const EvalConfig& cfg = {}) {
  MetricsReport rep;
  for (const auto& [az, el] : cfg.views) {
    const CameraPose cam = orbit_pose(az, el, cfg.radius, cfg.fov);
    const Index h = cfg.view_resolution;
    EditRender<T> src = render_edit(field, source_level, cam, h, h, cfg.samples);
    EditRender<T> ed = render_edit(field, edit_level, cam, h, h, cfg.samples);
    const Index H = ed.rgb.height, W = ed.rgb.width;
    const Image<double> out_region = region_projection(scene, cam, H, W, psnr_blobs);
    const Image<double> mask_region = region_projection(scene, cam, h, h, mask_blobs);
    ViewMetrics v;
    v.azimuth = az;
    v.elevation = el;
    v.psnr_outside = masked_psnr(src.rgb, ed.rgb, out_region);
    v.iou = mask_iou(ed.mask, mask_region);
    v.delta_red = delta_red(src.rgb, ed.rgb, region_projection(scene, cam, H, W, mask_blobs));
    rep.views.push_back(v);
    rep.masked_psnr_outside += v.psnr_outside;
    rep.mask_iou += v.iou;
    rep.delta_red += v.delta_red;
  }
  const double n = double(rep.views.size());
  rep.masked_psnr_outside /= n;
  rep.mask_iou /= n;
  rep.delta_red /= n;
  return rep;
}

}  // namespace lenerf
