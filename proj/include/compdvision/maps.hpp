#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

#include "compdvision/image.hpp"

namespace cdv {

/// Why a disparity or depth pixel is invalid. `kNone` marks a valid pixel; an invalid pixel
/// carries exactly one reason.
enum class Invalid : std::uint8_t {
  kNone = 0,
  kBelowMin,
  kLrFail,
  kUniquenessFail,
  kMarkerMasked,
};

inline std::string_view to_string(Invalid f) {
  switch (f) {
    case Invalid::kNone: return "valid";
    case Invalid::kBelowMin: return "below_min";
    case Invalid::kLrFail: return "lr_fail";
    case Invalid::kUniquenessFail: return "uniqueness_fail";
    case Invalid::kMarkerMasked: return "marker_masked";
  }
  return "unknown";
}

/// Per-pixel disparity in pixels with explicit validity.
struct DisparityMap {
  ImageF disparity;
  Image<Invalid> flags;
  int d_min = 0;
  int d_max = 0;

  DisparityMap() = default;
  DisparityMap(int width, int height, int dmin, int dmax)
      : disparity(width, height), flags(width, height, 1, Invalid::kNone), d_min(dmin), d_max(dmax) {}

  int width() const { return disparity.width(); }
  int height() const { return disparity.height(); }
  bool valid(int x, int y) const { return flags(x, y) == Invalid::kNone; }
  void invalidate(int x, int y, Invalid why) {
    flags(x, y) = why;
    disparity(x, y) = 0.0f;
  }

  long count_valid() const {
    long n = 0;
    for (auto f : flags.data()) n += f == Invalid::kNone;
    return n;
  }
};

/// Pinhole intrinsics of the (rectified) view a depth map lives in; used to back-project
/// pixels to metric points.
struct ViewIntrinsics {
  double focal_px = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Per-pixel depth in millimetres (or the rig's baseline units) with explicit validity.
struct DepthMap {
  ImageF depth;
  Image<Invalid> flags;
  ViewIntrinsics view;

  DepthMap() = default;
  DepthMap(int width, int height, ViewIntrinsics v = {})
      : depth(width, height), flags(width, height, 1, Invalid::kNone), view(v) {}

  int width() const { return depth.width(); }
  int height() const { return depth.height(); }
  bool valid(int x, int y) const { return flags(x, y) == Invalid::kNone; }
  void invalidate(int x, int y, Invalid why) {
    flags(x, y) = why;
    depth(x, y) = 0.0f;
  }

  /// Export form: invalid pixels become NaN.
  ImageF with_nan() const {
    ImageF out = depth;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (flags.data()[i] != Invalid::kNone) out.data()[i] = std::numeric_limits<float>::quiet_NaN();
    return out;
  }
};

inline ImageF with_nan(const DisparityMap& d) {
  ImageF out = d.disparity;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (d.flags.data()[i] != Invalid::kNone) out.data()[i] = std::numeric_limits<float>::quiet_NaN();
  return out;
}

}  // namespace cdv
