#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "compdvision/image.hpp"
#include "compdvision/maps.hpp"

namespace cdv::geometry {

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

/// Camera-to-world rigid transform (rotation columns are the camera axes in world frame).
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Pinhole camera with two-term radial distortion. Pixel centres sit on integer coordinates.
struct PinholeCamera {
  double focal_px = 1.0;
  Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
  double k1 = 0.0;
  double k2 = 0.0;
  RigidTransform pose;

  void validate() const {
    if (!(focal_px > 0.0) || !std::isfinite(focal_px)) throw Error("camera focal length must be positive");
    if (!std::isfinite(k1) || !std::isfinite(k2)) throw Error("distortion coefficients must be finite");
  }
};

/// Normalised undistorted coordinates -> normalised distorted coordinates.
inline Eigen::Vector2d distort(double k1, double k2, const Eigen::Vector2d& n) {
  const double r2 = n.squaredNorm();
  return n * (1.0 + k1 * r2 + k2 * r2 * r2);
}

/// Inverse of `distort`: Newton iteration on the radius, at most 5 steps, stopping once the
/// radius update falls below `tol` (normalised units).
inline Eigen::Vector2d undistort(double k1, double k2, const Eigen::Vector2d& d, double tol = 1e-12) {
  const double rd = d.norm();
  if (rd == 0.0 || (k1 == 0.0 && k2 == 0.0)) return d;
  double r = rd;
  for (int i = 0; i < 5; ++i) {
    const double r2 = r * r;
    const double f = r * (1.0 + k1 * r2 + k2 * r2 * r2) - rd;
    const double df = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
    const double step = f / df;
    r -= step;
    if (std::abs(step) < tol) break;
  }
  return d * (r / rd);
}

/// World point (mm) -> distorted pixel coordinate.
inline Eigen::Vector2d project(const PinholeCamera& cam, const Eigen::Vector3d& point) {
  const Eigen::Vector3d pc = cam.pose.rotation.transpose() * (point - cam.pose.translation);
  if (!(pc.z() > 0.0)) throw BehindCameraError("point is behind the camera");
  const Eigen::Vector2d n = distort(cam.k1, cam.k2, Eigen::Vector2d(pc.x() / pc.z(), pc.y() / pc.z()));
  return cam.principal_point + cam.focal_px * n;
}

/// Distorted pixel -> world-frame ray direction scaled to unit camera-z.
inline Eigen::Vector3d pixel_ray(const PinholeCamera& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector2d n = undistort(cam.k1, cam.k2, (pixel - cam.principal_point) / cam.focal_px);
  return cam.pose.rotation * Eigen::Vector3d(n.x(), n.y(), 1.0);
}

/// Z = f * B / d. Returns nullopt for a non-positive disparity.
inline std::optional<double> triangulate_depth(double focal_px, double baseline, double disparity_px) {
  if (!(disparity_px > 0.0)) return std::nullopt;
  return focal_px * baseline / disparity_px;
}

inline double disparity_for_depth(double focal_px, double baseline, double depth) {
  return focal_px * baseline / depth;
}

enum class BaselineUnits { kMillimetres, kPixels };

/// Vertical stereo pair: `top` and `bottom` unit cameras. After rectification (which includes the
/// transpose) the top unit plays the role of the left image.
struct StereoRig {
  PinholeCamera top;
  PinholeCamera bottom;
  double baseline = 1.0;
  BaselineUnits units = BaselineUnits::kMillimetres;
  /// Homographies mapping rectified pixels (pre-transpose orientation) to undistorted pixels.
  Eigen::Matrix3d rectify_top = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d rectify_bottom = Eigen::Matrix3d::Identity();
  double flange_focal_mm = 0.0;

  void validate() const {
    top.validate();
    bottom.validate();
    if (!(baseline > 0.0)) throw Error("baseline must be positive");
    if (std::abs(rectify_top.determinant()) < 1e-12 || std::abs(rectify_bottom.determinant()) < 1e-12)
      throw Error("rectifying transform is not invertible");
  }
};

/// Intrinsics of the rectified, transposed view of `cam`.
inline ViewIntrinsics rectified_view(const PinholeCamera& cam) {
  return {cam.focal_px, cam.principal_point.y(), cam.principal_point.x()};
}

struct RectifiedTile {
  ImageU8 image;
  /// Nonzero where the source sample fell inside the tile.
  Mask valid;
};

/// Transposes a vertically-separated tile into horizontal-epipolar orientation, removes radial
/// distortion and applies the rectifying homography, resampling bilinearly.
inline RectifiedTile rectify_tile(const ImageU8& tile, const PinholeCamera& cam,
                                  const Eigen::Matrix3d& homography = Eigen::Matrix3d::Identity()) {
  const int w = tile.width(), h = tile.height(), ch = tile.channels();
  RectifiedTile out{ImageU8(h, w, ch), Mask(h, w)};
  const bool identity = homography.isIdentity(0.0);
  for (int yo = 0; yo < w; ++yo) {
    for (int xo = 0; xo < h; ++xo) {
      // Output (xo, yo) is the rectified sample at original orientation (x = yo, y = xo).
      Eigen::Vector2d u(yo, xo);
      if (!identity) {
        const Eigen::Vector3d p = homography * Eigen::Vector3d(u.x(), u.y(), 1.0);
        u = p.head<2>() / p.z();
      }
      Eigen::Vector2d s = u;
      if (cam.k1 != 0.0 || cam.k2 != 0.0) {
        const Eigen::Vector2d n = (u - cam.principal_point) / cam.focal_px;
        s = cam.principal_point + cam.focal_px * distort(cam.k1, cam.k2, n);
      }
      const bool inside = s.x() >= -1e-9 && s.y() >= -1e-9 && s.x() <= w - 1 + 1e-9 && s.y() <= h - 1 + 1e-9;
      out.valid(xo, yo) = inside ? 1 : 0;
      const double sx = std::clamp(s.x(), 0.0, static_cast<double>(w - 1));
      const double sy = std::clamp(s.y(), 0.0, static_cast<double>(h - 1));
      const int x0 = std::min(static_cast<int>(sx), w - 1), y0 = std::min(static_cast<int>(sy), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < ch; ++c) {
        const double v = (1 - fy) * ((1 - fx) * tile(x0, y0, c) + fx * tile(x1, y0, c)) +
                         fy * ((1 - fx) * tile(x0, y1, c) + fx * tile(x1, y1, c));
        out.image(xo, yo, c) = static_cast<std::uint8_t>(v + 0.5);  // v is a convex mix of bytes
      }
    }
  }
  return out;
}

/// Plane n . p = offset with |n| = 1, oriented so n.z > 0 (facing the camera axis).
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset_mm = 0.0;

  /// Depth of the plane along the camera z axis at lateral position (x, y).
  double depth_at(double x, double y) const { return (offset_mm - normal.x() * x - normal.y() * y) / normal.z(); }
};

inline Eigen::Vector3d back_project(const ViewIntrinsics& v, int x, int y, double depth) {
  return {(x - v.cx) * depth / v.focal_px, (y - v.cy) * depth / v.focal_px, depth};
}

/// Least-squares plane Z = aX + bY + c over valid pixels inside `roi` (an empty roi selects the
/// whole map). Residuals are measured along depth.
inline Plane best_fit_plane(const DepthMap& depth, const Mask& roi = {}) {
  if (!roi.empty() && !roi.same_size(depth.depth)) throw FitError("roi size does not match depth map");
  long n = 0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.valid(x, y) && (roi.empty() || roi(x, y))) {
        mean += back_project(depth.view, x, y, depth.depth(x, y));
        ++n;
      }
  if (n < 3) throw FitError("plane fit needs at least 3 valid pixels");
  mean /= static_cast<double>(n);
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.valid(x, y) && (roi.empty() || roi(x, y))) {
        const Eigen::Vector3d p = back_project(depth.view, x, y, depth.depth(x, y)) - mean;
        a(0, 0) += p.x() * p.x();
        a(0, 1) += p.x() * p.y();
        a(1, 1) += p.y() * p.y();
        b(0) += p.x() * p.z();
        b(1) += p.y() * p.z();
      }
  a(1, 0) = a(0, 1);
  if (!(a.determinant() > 1e-12 * a.trace() * a.trace()))
    throw FitError("plane fit is degenerate (collinear points)");
  const Eigen::Vector2d slope = a.inverse() * b;
  const double c = mean.z() - slope.x() * mean.x() - slope.y() * mean.y();
  Eigen::Vector3d normal(-slope.x(), -slope.y(), 1.0);
  const double norm = normal.norm();
  return {normal / norm, c / norm};
}

/// Depth as an affine function of pixel position, Z(x, y) = a x + b y + c.
struct PixelPlane {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double at(int x, int y) const { return a * x + b * y + c; }
};

/// Least-squares Z = a x + b y + c over valid pixels inside `roi` (empty roi: whole map). Unlike
/// `best_fit_plane` the regressors do not depend on depth, so adding a constant to every depth
/// shifts only `c`.
inline PixelPlane fit_pixel_plane(const DepthMap& depth, const Mask& roi = {}) {
  if (!roi.empty() && !roi.same_size(depth.depth)) throw FitError("roi size does not match depth map");
  long n = 0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.valid(x, y) && (roi.empty() || roi(x, y))) {
        mean += Eigen::Vector3d(x, y, depth.depth(x, y));
        ++n;
      }
  if (n < 3) throw FitError("plane fit needs at least 3 valid pixels");
  mean /= static_cast<double>(n);
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.valid(x, y) && (roi.empty() || roi(x, y))) {
        const Eigen::Vector3d p = Eigen::Vector3d(x, y, depth.depth(x, y)) - mean;
        a(0, 0) += p.x() * p.x();
        a(0, 1) += p.x() * p.y();
        a(1, 1) += p.y() * p.y();
        b(0) += p.x() * p.z();
        b(1) += p.y() * p.z();
      }
  a(1, 0) = a(0, 1);
  if (!(a.determinant() > 1e-12 * a.trace() * a.trace()))
    throw FitError("plane fit is degenerate (collinear points)");
  const Eigen::Vector2d slope = a.inverse() * b;
  return {slope.x(), slope.y(), mean.z() - slope.x() * mean.x() - slope.y() * mean.y()};
}

}  // namespace cdv::geometry
