#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "compdvision/geometry.hpp"
#include "compdvision/image.hpp"

namespace cdv {

class LayoutError : public Error {
 public:
  using Error::Error;
};

enum class UnitRole {
  kStereoLeftTop,
  kStereoLeftBottom,
  kStereoRightTop,
  kStereoRightBottom,
  kTactile,
  kUnused,
};

inline std::string_view to_string(UnitRole r) {
  switch (r) {
    case UnitRole::kStereoLeftTop: return "stereo-left-top";
    case UnitRole::kStereoLeftBottom: return "stereo-left-bottom";
    case UnitRole::kStereoRightTop: return "stereo-right-top";
    case UnitRole::kStereoRightBottom: return "stereo-right-bottom";
    case UnitRole::kTactile: return "tactile";
    case UnitRole::kUnused: return "unused";
  }
  return "unknown";
}

inline bool is_stereo(UnitRole r) {
  return r == UnitRole::kStereoLeftTop || r == UnitRole::kStereoLeftBottom || r == UnitRole::kStereoRightTop ||
         r == UnitRole::kStereoRightBottom;
}

enum class StereoPair { kLeft, kRight };

inline std::string_view to_string(StereoPair p) { return p == StereoPair::kLeft ? "left" : "right"; }

/// Free parameters of the synthetic compound-eye sensor.
struct SensorConfig {
  int tile_width = 200;
  int tile_height = 200;
  /// Dark border between neighbouring tiles on the CMOS frame.
  int gap_px = 8;
  /// Lateral spacing between neighbouring vision units.
  double unit_pitch_mm = 2.0;
  double stereo_focal_px = 150.0;
  double stereo_k1 = -0.02;
  double stereo_k2 = 0.0;
  /// Image plane to sensor surface; the elastomer marker layer sits at this depth.
  double flange_focal_mm = 5.0;
  /// Stitched tactile canvas resolution. Tile overlap = tile size - pitch * scale.
  double elastomer_px_per_mm = 80.0;
};

struct VisionUnit {
  int index = 0;
  int row = 0;
  int col = 0;
  Rect rect;
  UnitRole role = UnitRole::kUnused;
  geometry::PinholeCamera camera;
  /// Lens inversion: the tile shows the scene rotated by 180 degrees.
  bool inverted = false;
  /// Tactile units: nominal canvas position of the upright tile's pixel (0, 0).
  Eigen::Vector2d canvas_origin = Eigen::Vector2d::Zero();
};

/// Partition of the CMOS frame into a grid of vision units.
struct SensorLayout {
  int frame_width = 0;
  int frame_height = 0;
  int rows = 0;
  int cols = 0;
  SensorConfig config;
  std::vector<VisionUnit> units;
  /// Nominal stitched canvas size (tactile units only).
  int canvas_width = 0;
  int canvas_height = 0;

  const VisionUnit& unit(int row, int col) const { return units.at(static_cast<std::size_t>(row * cols + col)); }

  const VisionUnit& unit_with_role(UnitRole role) const {
    for (const auto& u : units)
      if (u.role == role) return u;
    throw LayoutError("layout has no unit with role " + std::string(to_string(role)));
  }

  std::vector<const VisionUnit*> units_with(bool (*pred)(UnitRole)) const {
    std::vector<const VisionUnit*> out;
    for (const auto& u : units)
      if (pred(u.role)) out.push_back(&u);
    return out;
  }

  std::vector<const VisionUnit*> tactile_units() const {
    return units_with([](UnitRole r) { return r == UnitRole::kTactile; });
  }

  geometry::StereoRig rig(StereoPair pair) const {
    const auto& top = unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftTop : UnitRole::kStereoRightTop);
    const auto& bottom =
        unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftBottom : UnitRole::kStereoRightBottom);
    geometry::StereoRig rig;
    rig.top = top.camera;
    rig.bottom = bottom.camera;
    rig.baseline = (bottom.camera.pose.translation - top.camera.pose.translation).norm();
    rig.flange_focal_mm = config.flange_focal_mm;
    return rig;
  }

  void validate() const {
    if (units.empty()) throw LayoutError("layout has no units");
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (!units[i].rect.inside(frame_width, frame_height)) throw LayoutError("unit rectangle outside frame");
      for (std::size_t j = i + 1; j < units.size(); ++j)
        if (units[i].rect.overlaps(units[j].rect)) throw LayoutError("unit rectangles overlap");
    }
  }
};

/// 3 x 5 grid: corner units form the two vertical stereo pairs, the central 3 x 3 block is tactile,
/// the two middle-row edge units are unused.
inline SensorLayout make_layout(const SensorConfig& cfg = {}) {
  if (cfg.tile_width < 16 || cfg.tile_height < 16 || cfg.gap_px < 0) throw LayoutError("invalid tile geometry");
  SensorLayout lay;
  lay.rows = 3;
  lay.cols = 5;
  lay.config = cfg;
  const int w = cfg.tile_width, h = cfg.tile_height;
  lay.frame_width = lay.cols * (w + cfg.gap_px) + cfg.gap_px;
  lay.frame_height = lay.rows * (h + cfg.gap_px) + cfg.gap_px;
  const double s = cfg.elastomer_px_per_mm;
  const Eigen::Vector2d tile_centre((w - 1) / 2.0, (h - 1) / 2.0);
  const Eigen::Vector2d canvas_centre = tile_centre + Eigen::Vector2d::Constant(s * cfg.unit_pitch_mm);
  lay.canvas_width = static_cast<int>(std::lround(w + 2 * s * cfg.unit_pitch_mm));
  lay.canvas_height = static_cast<int>(std::lround(h + 2 * s * cfg.unit_pitch_mm));
  for (int r = 0; r < lay.rows; ++r) {
    for (int c = 0; c < lay.cols; ++c) {
      VisionUnit u;
      u.index = r * lay.cols + c;
      u.row = r;
      u.col = c;
      u.rect = {cfg.gap_px + c * (w + cfg.gap_px), cfg.gap_px + r * (h + cfg.gap_px), w, h};
      const Eigen::Vector2d pos((c - 2) * cfg.unit_pitch_mm, (r - 1) * cfg.unit_pitch_mm);
      u.camera.pose.translation = Eigen::Vector3d(pos.x(), pos.y(), 0.0);
      u.camera.principal_point = tile_centre;
      const bool edge_col = c == 0 || c == lay.cols - 1;
      if (edge_col && r != 1) {
        const bool left = c == 0, top = r == 0;
        u.role = left ? (top ? UnitRole::kStereoLeftTop : UnitRole::kStereoLeftBottom)
                      : (top ? UnitRole::kStereoRightTop : UnitRole::kStereoRightBottom);
        u.camera.focal_px = cfg.stereo_focal_px;
        u.camera.k1 = cfg.stereo_k1;
        u.camera.k2 = cfg.stereo_k2;
      } else if (edge_col) {
        u.role = UnitRole::kUnused;
        u.camera.focal_px = cfg.stereo_focal_px;
      } else {
        u.role = UnitRole::kTactile;
        u.camera.focal_px = s * cfg.flange_focal_mm;
        u.inverted = true;
        u.canvas_origin = canvas_centre + s * pos - tile_centre;
      }
      lay.units.push_back(u);
    }
  }
  lay.validate();
  return lay;
}

}  // namespace cdv
