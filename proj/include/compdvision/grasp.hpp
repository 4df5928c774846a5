#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "compdvision/config.hpp"
#include "compdvision/force.hpp"
#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tactile.hpp"
#include "compdvision/tuner.hpp"

namespace cdv::grasp {

class ScriptError : public Error {
 public:
  using Error::Error;
};

/// One scripted phase; distance and contact move linearly from start to end over `frames`.
/// A missing contact end point means no contact.
struct Phase {
  std::string name;
  int frames = 1;
  double distance_start_mm = 40.0;
  double distance_end_mm = 40.0;
  std::optional<synth::ContactSpec> contact_start;
  std::optional<synth::ContactSpec> contact_end;
};

struct GraspScript {
  std::vector<Phase> phases;
  std::uint64_t seed = 0;

  int frame_count() const {
    int n = 0;
    for (const auto& p : phases) n += p.frames;
    return n;
  }

  void validate() const {
    if (phases.empty()) throw ScriptError("grasp script has no phases");
    for (const auto& p : phases) {
      if (p.frames < 1) throw ScriptError("phase '" + p.name + "' needs at least one frame");
      for (double d : {p.distance_start_mm, p.distance_end_mm})
        if (!(d >= 0.0 && d <= synth::kMaxTargetDistanceMm)) throw ScriptError("phase distances must lie in [0, 70] mm");
      for (const auto& c : {p.contact_start, p.contact_end})
        if (c) c->validate();
    }
  }
};

/// Scene state of global frame `index`.
struct FrameState {
  std::string phase;
  double distance_mm = 0.0;
  std::optional<synth::ContactSpec> contact;
};

inline FrameState state_at(const GraspScript& script, int index) {
  int start = 0;
  for (const auto& p : script.phases) {
    if (index < start + p.frames) {
      const double t = p.frames > 1 ? static_cast<double>(index - start) / (p.frames - 1) : 0.0;
      FrameState s{p.name, p.distance_start_mm + t * (p.distance_end_mm - p.distance_start_mm), std::nullopt};
      if (p.contact_start || p.contact_end) {
        const synth::ContactSpec zero = [&] {
          synth::ContactSpec c = p.contact_start ? *p.contact_start : *p.contact_end;
          c.normal_depth_mm = 0.0;
          c.tangential_shift_mm.setZero();
          return c;
        }();
        const auto& a = p.contact_start ? *p.contact_start : zero;
        const auto& b = p.contact_end ? *p.contact_end : zero;
        synth::ContactSpec c;
        c.centre_px = a.centre_px + t * (b.centre_px - a.centre_px);
        c.normal_depth_mm = a.normal_depth_mm + t * (b.normal_depth_mm - a.normal_depth_mm);
        c.tangential_shift_mm = a.tangential_shift_mm + t * (b.tangential_shift_mm - a.tangential_shift_mm);
        c.radius_mm = a.radius_mm + t * (b.radius_mm - a.radius_mm);
        s.contact = c;
      }
      return s;
    }
    start += p.frames;
  }
  throw ScriptError("frame index past the end of the script");
}

/// Approach, grasp, lift, hold, release, retreat. Forces stay inside the force model's range.
inline GraspScript default_script(const SensorLayout& layout) {
  const Eigen::Vector2d centre((layout.canvas_width - 1) / 2.0, (layout.canvas_height - 1) / 2.0);
  synth::ContactSpec light;
  light.centre_px = centre;
  light.radius_mm = 1.6;
  synth::ContactSpec pressed = light;
  pressed.normal_depth_mm = 0.35;
  synth::ContactSpec loaded = pressed;
  loaded.tangential_shift_mm = {0.0, 0.03};
  GraspScript s;
  s.phases = {{"approach", 12, 70.0, 15.0, std::nullopt, std::nullopt},
              {"grasp", 8, 15.0, 15.0, light, pressed},
              {"lift", 8, 15.0, 15.0, pressed, loaded},
              {"hold", 6, 15.0, 15.0, loaded, loaded},
              {"release", 8, 15.0, 15.0, loaded, light},
              {"retreat", 8, 15.0, 50.0, std::nullopt, std::nullopt}};
  return s;
}

struct TimelineRow {
  int frame = 0;
  std::string phase;
  double gt_distance_mm = 0.0;
  /// Median valid depth over the evaluation ROI; NaN when no pixel is valid.
  double median_depth_mm = std::numeric_limits<double>::quiet_NaN();
  force::ForceVector force;
  force::ForceVector gt_force;
  double wall_ms = 0.0;
};

struct GraspOptions {
  StereoPair pair = StereoPair::kLeft;
  tuner::StereoParams stereo;
  /// Rig used for depth; defaults to the layout's own when empty.
  std::optional<geometry::StereoRig> rig;
};

struct GraspResult {
  std::vector<TimelineRow> rows;
  double median_wall_ms = 0.0;
};

/// Renders every frame, then times depth + tactile tracking + force inference per frame. The
/// tactile reference is a contact-free render at the first frame's distance.
inline GraspResult run_grasp(const GraspScript& script, const SensorLayout& layout, const force::ForceNet& net,
                             const GraspOptions& opt = {}) {
  script.validate();
  const auto rig = opt.rig ? *opt.rig : layout.rig(opt.pair);
  const auto& top = layout.unit_with_role(opt.pair == StereoPair::kLeft ? UnitRole::kStereoLeftTop : UnitRole::kStereoRightTop);
  const auto& bottom =
      layout.unit_with_role(opt.pair == StereoPair::kLeft ? UnitRole::kStereoLeftBottom : UnitRole::kStereoRightBottom);
  auto scene = synth::default_scene(layout);
  scene.rng_seed = script.seed;
  scene.target_distance_mm = state_at(script, 0).distance_mm;
  scene.contact.reset();
  const tactile::MarkerTracker tracker(synth::render_compound_frame(layout, scene).frame, layout);
  const synth::ForceModel force_model;

  GraspResult out;
  std::vector<double> times;
  for (int i = 0; i < script.frame_count(); ++i) {
    const auto st = state_at(script, i);
    scene.target_distance_mm = st.distance_mm;
    scene.contact = st.contact;
    scene.rng_seed = script.seed + static_cast<std::uint64_t>(i) + 1;
    const auto frame = synth::render_compound_frame(layout, scene).frame;

    TimelineRow row;
    row.frame = i;
    row.phase = st.phase;
    row.gt_distance_mm = st.distance_mm;
    if (st.contact) row.gt_force = force_model.force(*st.contact);
    const auto t0 = std::chrono::steady_clock::now();
    const auto depth = stereo::estimate_depth_from_tiles(crop(frame, top.rect), crop(frame, bottom.rect), rig,
                                                         opt.stereo.sgbm, opt.stereo.wls, opt.stereo.masking);
    const auto tracked = tracker.track(frame);
    row.force = force::forward(net, tracked.grid);
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    const auto roi = metrics::make_roi(depth.depth.width(), depth.depth.height(), opt.stereo.sgbm.d_max,
                                       tuner::kRoiMargin, depth.marker_mask);
    std::vector<double> valid;
    for (int y = roi.rect.y; y < roi.rect.bottom(); ++y)
      for (int x = roi.rect.x; x < roi.rect.right(); ++x)
        if (roi.contains(x, y) && depth.depth.valid(x, y)) valid.push_back(depth.depth.depth(x, y));
    if (!valid.empty()) row.median_depth_mm = metrics::median(std::move(valid));
    times.push_back(row.wall_ms);
    out.rows.push_back(row);
  }
  out.median_wall_ms = metrics::median(times);
  return out;
}

inline constexpr const char* kTimelineHeader = "frame,phase,gt_distance_mm,median_depth_mm,fx,fy,fz,gt_fx,gt_fy,gt_fz";

}  // namespace cdv::grasp

namespace cdv::grasp {

inline void to_json(io::Json& j, const Phase& p) {
  j = {{"name", p.name},
       {"frames", p.frames},
       {"distance_start_mm", p.distance_start_mm},
       {"distance_end_mm", p.distance_end_mm},
       {"contact_start", p.contact_start ? io::Json(*p.contact_start) : io::Json(nullptr)},
       {"contact_end", p.contact_end ? io::Json(*p.contact_end) : io::Json(nullptr)}};
}

inline void from_json(const io::Json& j, Phase& p) {
  using io::detail::get_if;
  get_if(j, "name", p.name);
  get_if(j, "frames", p.frames);
  get_if(j, "distance_start_mm", p.distance_start_mm);
  get_if(j, "distance_end_mm", p.distance_end_mm);
  for (auto [key, field] : {std::pair{"contact_start", &p.contact_start}, std::pair{"contact_end", &p.contact_end}}) {
    if (!j.contains(key) || j.at(key).is_null()) continue;
    *field = j.at(key).get<synth::ContactSpec>();
  }
}

inline void to_json(io::Json& j, const GraspScript& s) { j = {{"seed", s.seed}, {"phases", s.phases}}; }

inline void from_json(const io::Json& j, GraspScript& s) {
  io::detail::get_if(j, "seed", s.seed);
  io::detail::get_if(j, "phases", s.phases);
}

}  // namespace cdv::grasp
