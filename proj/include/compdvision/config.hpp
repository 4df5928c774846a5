#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "compdvision/force.hpp"
#include "compdvision/geometry.hpp"
#include "compdvision/io.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tuner.hpp"

// JSON bindings for every configuration type. Readers start from the type's defaults and
// override only the keys present, so partial files are valid.

namespace cdv::io::detail {

template <typename T>
void get_if(const Json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

inline Json vec2(const Eigen::Vector2d& v) { return Json::array({v.x(), v.y()}); }

inline void get_vec2(const Json& j, const char* key, Eigen::Vector2d& v) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw IoError(std::string(key) + " must be a 2-element array");
  v = {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace cdv::io::detail

namespace cdv {

inline void to_json(io::Json& j, const SensorConfig& c) {
  j = {{"tile_width", c.tile_width},           {"tile_height", c.tile_height},
       {"gap_px", c.gap_px},                   {"unit_pitch_mm", c.unit_pitch_mm},
       {"stereo_focal_px", c.stereo_focal_px}, {"stereo_k1", c.stereo_k1},
       {"stereo_k2", c.stereo_k2},             {"flange_focal_mm", c.flange_focal_mm},
       {"elastomer_px_per_mm", c.elastomer_px_per_mm}};
}

inline void from_json(const io::Json& j, SensorConfig& c) {
  using io::detail::get_if;
  get_if(j, "tile_width", c.tile_width);
  get_if(j, "tile_height", c.tile_height);
  get_if(j, "gap_px", c.gap_px);
  get_if(j, "unit_pitch_mm", c.unit_pitch_mm);
  get_if(j, "stereo_focal_px", c.stereo_focal_px);
  get_if(j, "stereo_k1", c.stereo_k1);
  get_if(j, "stereo_k2", c.stereo_k2);
  get_if(j, "flange_focal_mm", c.flange_focal_mm);
  get_if(j, "elastomer_px_per_mm", c.elastomer_px_per_mm);
}

}  // namespace cdv

namespace cdv::stereo {

inline void to_json(io::Json& j, const SgbmParams& p) {
  j = {{"census_window", p.census_window}, {"block_radius", p.block_radius},
       {"p1", p.p1},                       {"p2", p.p2},
       {"uniqueness_ratio", p.uniqueness_ratio}, {"lr_threshold", p.lr_threshold},
       {"d_min", p.d_min},                 {"d_max", p.d_max},
       {"paths", p.paths}};
}

inline void from_json(const io::Json& j, SgbmParams& p) {
  using io::detail::get_if;
  get_if(j, "census_window", p.census_window);
  get_if(j, "block_radius", p.block_radius);
  get_if(j, "p1", p.p1);
  get_if(j, "p2", p.p2);
  get_if(j, "uniqueness_ratio", p.uniqueness_ratio);
  get_if(j, "lr_threshold", p.lr_threshold);
  get_if(j, "d_min", p.d_min);
  get_if(j, "d_max", p.d_max);
  get_if(j, "paths", p.paths);
}

inline void to_json(io::Json& j, const WlsParams& p) {
  j = {{"lambda", p.lambda}, {"sigma_color", p.sigma_color}, {"iterations", p.iterations}};
}

inline void from_json(const io::Json& j, WlsParams& p) {
  using io::detail::get_if;
  get_if(j, "lambda", p.lambda);
  get_if(j, "sigma_color", p.sigma_color);
  get_if(j, "iterations", p.iterations);
}

inline void to_json(io::Json& j, const MarkerMaskParams& p) {
  j = {{"threshold", p.threshold}, {"dilation", p.dilation}};
}

inline void from_json(const io::Json& j, MarkerMaskParams& p) {
  using io::detail::get_if;
  get_if(j, "threshold", p.threshold);
  get_if(j, "dilation", p.dilation);
}

}  // namespace cdv::stereo

namespace cdv::tuner {

inline void to_json(io::Json& j, const StereoParams& p) {
  j = {{"sgbm", p.sgbm}, {"wls", p.wls}, {"marker_mask", p.masking}};
}

inline void from_json(const io::Json& j, StereoParams& p) {
  using io::detail::get_if;
  get_if(j, "sgbm", p.sgbm);
  get_if(j, "wls", p.wls);
  get_if(j, "marker_mask", p.masking);
}

inline void to_json(io::Json& j, const Bounds& b) { j = {{"lower", b.lower}, {"upper", b.upper}}; }

inline void from_json(const io::Json& j, Bounds& b) {
  using io::detail::get_if;
  get_if(j, "lower", b.lower);
  get_if(j, "upper", b.upper);
}

inline void to_json(io::Json& j, const AnnealOptions& o) {
  j = {{"seed", o.seed},
       {"budget", o.budget},
       {"visit", o.visit},
       {"accept", o.accept},
       {"initial_temp", o.initial_temp},
       {"restart_temp_ratio", o.restart_temp_ratio},
       {"polish_steps", o.polish_steps},
       {"threads", o.threads}};
}

inline void from_json(const io::Json& j, AnnealOptions& o) {
  using io::detail::get_if;
  get_if(j, "seed", o.seed);
  get_if(j, "budget", o.budget);
  get_if(j, "visit", o.visit);
  get_if(j, "accept", o.accept);
  get_if(j, "initial_temp", o.initial_temp);
  get_if(j, "restart_temp_ratio", o.restart_temp_ratio);
  get_if(j, "polish_steps", o.polish_steps);
  get_if(j, "threads", o.threads);
}

}  // namespace cdv::tuner

namespace cdv::synth {

inline void to_json(io::Json& j, const TextureSpec& t) {
  j = {{"seed", t.seed}, {"cell_mm", t.cell_mm}, {"octaves", t.octaves}, {"low", t.low}, {"high", t.high}};
}

inline void from_json(const io::Json& j, TextureSpec& t) {
  using io::detail::get_if;
  get_if(j, "seed", t.seed);
  get_if(j, "cell_mm", t.cell_mm);
  get_if(j, "octaves", t.octaves);
  get_if(j, "low", t.low);
  get_if(j, "high", t.high);
}

inline void to_json(io::Json& j, const MarkerLayout& m) {
  j = {{"rows", m.rows},
       {"cols", m.cols},
       {"pitch_px", m.pitch_px},
       {"origin", io::detail::vec2(m.origin)},
       {"radius_px", m.radius_px}};
}

inline void from_json(const io::Json& j, MarkerLayout& m) {
  using io::detail::get_if;
  get_if(j, "rows", m.rows);
  get_if(j, "cols", m.cols);
  get_if(j, "pitch_px", m.pitch_px);
  io::detail::get_vec2(j, "origin", m.origin);
  get_if(j, "radius_px", m.radius_px);
}

inline void to_json(io::Json& j, const ContactSpec& c) {
  j = {{"centre_px", io::detail::vec2(c.centre_px)},
       {"normal_depth_mm", c.normal_depth_mm},
       {"tangential_shift_mm", io::detail::vec2(c.tangential_shift_mm)},
       {"radius_mm", c.radius_mm}};
}

inline void from_json(const io::Json& j, ContactSpec& c) {
  using io::detail::get_if;
  io::detail::get_vec2(j, "centre_px", c.centre_px);
  get_if(j, "normal_depth_mm", c.normal_depth_mm);
  io::detail::get_vec2(j, "tangential_shift_mm", c.tangential_shift_mm);
  get_if(j, "radius_mm", c.radius_mm);
}

inline void to_json(io::Json& j, const SceneSpec& s) {
  j = {{"target_distance_mm", s.target_distance_mm},
       {"texture", s.texture},
       {"markers", s.markers},
       {"noise_sigma", s.noise_sigma},
       {"rng_seed", s.rng_seed}};
  j["contact"] = s.contact ? io::Json(*s.contact) : io::Json(nullptr);
}

inline void from_json(const io::Json& j, SceneSpec& s) {
  using io::detail::get_if;
  get_if(j, "target_distance_mm", s.target_distance_mm);
  get_if(j, "texture", s.texture);
  get_if(j, "markers", s.markers);
  get_if(j, "noise_sigma", s.noise_sigma);
  get_if(j, "rng_seed", s.rng_seed);
  if (j.contains("contact")) {
    if (j.at("contact").is_null()) {
      s.contact.reset();
    } else {
      ContactSpec c = s.contact.value_or(ContactSpec{});
      j.at("contact").get_to(c);
      s.contact = c;
    }
  }
}

inline void to_json(io::Json& j, const ForceVector& f) { j = {{"fx", f.fx}, {"fy", f.fy}, {"fz", f.fz}}; }

}  // namespace cdv::synth

namespace cdv::force {

inline void to_json(io::Json& j, const TrainParams& p) {
  j = {{"learning_rate", p.learning_rate}, {"momentum", p.momentum}, {"batch", p.batch},
       {"epochs", p.epochs},               {"seed", p.seed}};
}

inline void from_json(const io::Json& j, TrainParams& p) {
  using io::detail::get_if;
  get_if(j, "learning_rate", p.learning_rate);
  get_if(j, "momentum", p.momentum);
  get_if(j, "batch", p.batch);
  get_if(j, "epochs", p.epochs);
  get_if(j, "seed", p.seed);
}

inline void to_json(io::Json& j, const DatasetSpec& d) {
  j = {{"count", d.count},
       {"train_fraction", d.train_fraction},
       {"grid_noise_px", d.grid_noise_px},
       {"seed", d.seed},
       {"fx_range", {d.fx_min, d.fx_max}},
       {"fz_range", {d.fz_min, d.fz_max}},
       {"centre_spread_mm", d.centre_spread_mm},
       {"radius_range_mm", {d.radius_min_mm, d.radius_max_mm}}};
}

inline void from_json(const io::Json& j, DatasetSpec& d) {
  using io::detail::get_if;
  get_if(j, "count", d.count);
  get_if(j, "train_fraction", d.train_fraction);
  get_if(j, "grid_noise_px", d.grid_noise_px);
  get_if(j, "seed", d.seed);
  const auto range = [&](const char* key, double& lo, double& hi) {
    Eigen::Vector2d v(lo, hi);
    io::detail::get_vec2(j, key, v);
    lo = v.x();
    hi = v.y();
  };
  range("fx_range", d.fx_min, d.fx_max);
  range("fz_range", d.fz_min, d.fz_max);
  get_if(j, "centre_spread_mm", d.centre_spread_mm);
  range("radius_range_mm", d.radius_min_mm, d.radius_max_mm);
}

}  // namespace cdv::force

namespace cdv::io {

/// Calibration file for one stereo pair:
/// `{focal_px, baseline, baseline_units: "mm"|"px", principal_point, k1, k2, flange_focal_mm}`.
/// Both cameras share the intrinsics; keys such as `reprojection_error_px` are metadata and ignored.
/// Missing keys keep the values of `base`.
inline geometry::StereoRig rig_from_json(const Json& j, geometry::StereoRig base) {
  using detail::get_if;
  for (auto* cam : {&base.top, &base.bottom}) {
    get_if(j, "focal_px", cam->focal_px);
    detail::get_vec2(j, "principal_point", cam->principal_point);
    get_if(j, "k1", cam->k1);
    get_if(j, "k2", cam->k2);
  }
  get_if(j, "baseline", base.baseline);
  if (j.contains("baseline_units")) {
    const auto u = j.at("baseline_units").get<std::string>();
    if (u == "mm")
      base.units = geometry::BaselineUnits::kMillimetres;
    else if (u == "px")
      base.units = geometry::BaselineUnits::kPixels;
    else
      throw IoError("baseline_units must be \"mm\" or \"px\"");
  }
  get_if(j, "flange_focal_mm", base.flange_focal_mm);
  base.validate();
  return base;
}

inline Json rig_to_json(const geometry::StereoRig& rig) {
  return {{"focal_px", rig.top.focal_px},
          {"baseline", rig.baseline},
          {"baseline_units", rig.units == geometry::BaselineUnits::kPixels ? "px" : "mm"},
          {"principal_point", detail::vec2(rig.top.principal_point)},
          {"k1", rig.top.k1},
          {"k2", rig.top.k2},
          {"flange_focal_mm", rig.flange_focal_mm}};
}

/// A calibration file holds either one pair object applied to both pairs, or `{"left": ..., "right": ...}`.
inline geometry::StereoRig load_rig(const std::filesystem::path& path, const SensorLayout& layout, StereoPair pair) {
  const Json j = read_json(path);
  const char* key = pair == StereoPair::kLeft ? "left" : "right";
  try {
    return rig_from_json(j.contains(key) ? j.at(key) : j, layout.rig(pair));
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Reads a JSON file into `T`, starting from `value`.
template <typename T>
T load_config(const std::filesystem::path& path, T value = {}) {
  const Json j = read_json(path);
  try {
    j.get_to(value);
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return value;
}

}  // namespace cdv::io
