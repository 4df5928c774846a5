#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compdvision/geometry.hpp"
#include "compdvision/image.hpp"
#include "compdvision/maps.hpp"

namespace cdv::metrics {

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Evaluation region: a rectangle minus an optional exclusion mask (marker areas).
struct RoiSpec {
  Rect rect;
  Mask exclude;

  bool contains(int x, int y) const { return rect.contains(x, y) && (exclude.empty() || !exclude(x, y)); }

  long pixel_count() const {
    long n = 0;
    for (int y = rect.y; y < rect.bottom(); ++y)
      for (int x = rect.x; x < rect.right(); ++x) n += contains(x, y);
    return n;
  }

  void validate(int width, int height) const {
    if (rect.empty() || !rect.inside(width, height)) throw MetricError("roi rectangle empty or outside the image");
    if (!exclude.empty() && (exclude.width() != width || exclude.height() != height))
      throw MetricError("roi exclusion mask size mismatch");
    if (pixel_count() == 0) throw MetricError("roi selects no pixels");
  }

  Mask as_mask(int width, int height) const {
    Mask m(width, height);
    for (int y = rect.y; y < rect.bottom(); ++y)
      for (int x = rect.x; x < rect.right(); ++x) m(x, y) = contains(x, y) ? 1 : 0;
    return m;
  }
};

/// Rectangle that drops the `d_max` left columns (no correspondences) and a `margin` on every side,
/// minus the marker mask.
inline RoiSpec make_roi(int width, int height, int d_max, int margin, Mask marker_mask = {}) {
  RoiSpec roi;
  roi.rect = {d_max + margin, margin, width - d_max - 2 * margin, height - 2 * margin};
  roi.exclude = std::move(marker_mask);
  if (roi.rect.empty()) throw MetricError("roi is empty for this image size");
  return roi;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw MetricError("median of an empty set");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

/// 100 * valid / total over the ROI.
inline double fill_rate(const DepthMap& depth, const RoiSpec& roi) {
  roi.validate(depth.width(), depth.height());
  long total = 0, valid = 0;
  for (int y = roi.rect.y; y < roi.rect.bottom(); ++y)
    for (int x = roi.rect.x; x < roi.rect.right(); ++x)
      if (roi.contains(x, y)) {
        ++total;
        valid += depth.valid(x, y);
      }
  return 100.0 * static_cast<double>(valid) / static_cast<double>(total);
}

/// Median |depth - GT| over valid ROI pixels, GT = flange + target distance. With plane correction
/// each depth is first replaced by its offset from the best-fit plane added to GT, which cancels
/// tilt and offset errors of the camera pose.
inline double z_accuracy(const DepthMap& depth, double gt_distance_mm, double flange_focal_mm, const RoiSpec& roi,
                         bool plane_correction = true) {
  roi.validate(depth.width(), depth.height());
  const double gt = flange_focal_mm + gt_distance_mm;
  const Mask sel = roi.as_mask(depth.width(), depth.height());
  std::optional<geometry::PixelPlane> plane;
  if (plane_correction) plane = geometry::fit_pixel_plane(depth, sel);
  std::vector<double> err;
  for (int y = roi.rect.y; y < roi.rect.bottom(); ++y)
    for (int x = roi.rect.x; x < roi.rect.right(); ++x) {
      if (!sel(x, y) || !depth.valid(x, y)) continue;
      double z = depth.depth(x, y);
      if (plane) z = z - plane->at(x, y) + gt;
      err.push_back(std::abs(z - gt));
    }
  if (err.empty()) throw MetricError("no valid pixels in roi");
  return median(std::move(err));
}

/// RMS depth residual from the best-fit plane over valid ROI pixels, in percent of `gt_depth_mm`.
inline double spatial_rmse(const DepthMap& depth, const RoiSpec& roi, double gt_depth_mm) {
  roi.validate(depth.width(), depth.height());
  if (!(gt_depth_mm > 0.0)) throw MetricError("ground-truth distance must be positive");
  const Mask sel = roi.as_mask(depth.width(), depth.height());
  const auto plane = geometry::fit_pixel_plane(depth, sel);
  double ss = 0.0;
  long n = 0;
  for (int y = roi.rect.y; y < roi.rect.bottom(); ++y)
    for (int x = roi.rect.x; x < roi.rect.right(); ++x) {
      if (!sel(x, y) || !depth.valid(x, y)) continue;
      const double r = depth.depth(x, y) - plane.at(x, y);
      ss += r * r;
      ++n;
    }
  return 100.0 * std::sqrt(ss / static_cast<double>(n)) / gt_depth_mm;
}

/// Median over ROI pixels (valid in every frame) of the per-pixel sample standard deviation.
inline double temporal_noise(std::span<const DepthMap> frames, const RoiSpec& roi) {
  if (frames.size() < 2) throw MetricError("temporal noise needs at least two frames");
  const int w = frames[0].width(), h = frames[0].height();
  for (const auto& f : frames)
    if (f.width() != w || f.height() != h) throw MetricError("frame size mismatch");
  roi.validate(w, h);
  const double n = static_cast<double>(frames.size());
  std::vector<double> sd;
  for (int y = roi.rect.y; y < roi.rect.bottom(); ++y)
    for (int x = roi.rect.x; x < roi.rect.right(); ++x) {
      if (!roi.contains(x, y)) continue;
      bool all = true;
      double mean = 0.0;
      for (const auto& f : frames) {
        all &= f.valid(x, y);
        mean += f.depth(x, y);
      }
      if (!all) continue;
      mean /= n;
      double ss = 0.0;
      for (const auto& f : frames) ss += (f.depth(x, y) - mean) * (f.depth(x, y) - mean);
      sd.push_back(std::sqrt(ss / (n - 1.0)));
    }
  if (sd.empty()) throw MetricError("no pixel is valid in every frame");
  return median(std::move(sd));
}

struct MetricReport {
  double distance_mm = 0.0;
  std::string pair;
  double fill_rate = 0.0;
  double z_accuracy_mm = 0.0;
  double rmse_percent = 0.0;
  double temporal_noise_mm = 0.0;
};

inline constexpr const char* kReportCsvHeader = "distance_mm,pair,fill_rate,z_accuracy_mm,rmse_percent,temporal_noise_mm";

}  // namespace cdv::metrics
