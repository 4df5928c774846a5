#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compdvision/image.hpp"
#include "compdvision/layout.hpp"

namespace cdv::tactile {

class RoiError : public Error {
 public:
  using Error::Error;
};

struct Hsv {
  double h = 0.0;  // [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Hexcone model.
inline Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta > 0.0) {
    if (mx == r)
      out.h = 60.0 * ((g - b) / delta + (g < b ? 6.0 : 0.0));
    else if (mx == g)
      out.h = 60.0 * ((b - r) / delta + 2.0);
    else
      out.h = 60.0 * ((r - g) / delta + 4.0);
    if (out.h >= 360.0) out.h -= 360.0;
  }
  return out;
}

/// Inclusive HSV window. Defaults select dark markers regardless of hue and saturation.
struct HsvBounds {
  double h_min = 0.0, h_max = 360.0;
  double s_min = 0.0, s_max = 1.0;
  double v_min = 0.0, v_max = 0.35;

  bool contains(const Hsv& p) const {
    return p.h >= h_min && p.h <= h_max && p.s >= s_min && p.s <= s_max && p.v >= v_min && p.v <= v_max;
  }
  void validate() const {
    if (!(h_min < h_max) || !(s_min < s_max) || !(v_min < v_max)) throw Error("HSV bounds need min < max");
  }
};

struct DetectorParams {
  HsvBounds hsv;
  double min_area = 12.0;
  double max_area = 400.0;
  double min_circularity = 0.6;
  /// Drop blobs touching the image border (partially visible markers).
  bool reject_border = false;
};

struct Marker {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  double area = 0.0;
};

using MarkerSet = std::vector<Marker>;

/// Thresholds in HSV, labels 8-connected components, filters them by area and circularity and
/// returns intensity-weighted centroids (weights: 1 - V).
inline MarkerSet detect_markers(const ImageU8& rgb, const DetectorParams& params = {}) {
  params.hsv.validate();
  if (rgb.channels() != 3) throw Error("detect_markers expects an RGB image");
  const int w = rgb.width(), h = rgb.height();
  Mask mask(w, h);
  ImageF weight(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // V alone rejects most background pixels before the full conversion.
      const double v = std::max({rgb(x, y, 0), rgb(x, y, 1), rgb(x, y, 2)}) / 255.0;
      if (v < params.hsv.v_min || v > params.hsv.v_max) continue;
      const Hsv p = rgb_to_hsv(rgb(x, y, 0), rgb(x, y, 1), rgb(x, y, 2));
      if (params.hsv.contains(p)) {
        mask(x, y) = 1;
        weight(x, y) = static_cast<float>(1.0 - p.v);
      }
    }

  MarkerSet out;
  Image<std::int32_t> label(w, h, 1, -1);
  std::vector<std::pair<int, int>> stack;
  std::vector<std::pair<int, int>> pixels;
  int next = 0;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (!mask(x0, y0) || label(x0, y0) >= 0) continue;
      pixels.clear();
      stack.assign(1, {x0, y0});
      label(x0, y0) = next;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        pixels.emplace_back(x, y);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h && mask(nx, ny) && label(nx, ny) < 0) {
              label(nx, ny) = next;
              stack.emplace_back(nx, ny);
            }
          }
      }
      // Deterministic accumulation order regardless of flood-fill order.
      std::sort(pixels.begin(), pixels.end(), [](auto a, auto b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
      const double area = static_cast<double>(pixels.size());
      bool touches_border = false;
      long crack = 0;
      double sw = 0.0, sx = 0.0, sy = 0.0;
      for (auto [x, y] : pixels) {
        touches_border |= x == 0 || y == 0 || x == w - 1 || y == h - 1;
        crack += (x == 0 || !mask(x - 1, y)) + (x == w - 1 || !mask(x + 1, y)) + (y == 0 || !mask(x, y - 1)) +
                 (y == h - 1 || !mask(x, y + 1));
        const double wt = weight(x, y);
        sw += wt;
        sx += wt * x;
        sy += wt * y;
      }
      ++next;
      if (area < params.min_area || area > params.max_area) continue;
      if (params.reject_border && touches_border) continue;
      // Crack length over-counts a Euclidean boundary by 4/pi on average.
      const double perimeter = crack * std::numbers::pi / 4.0;
      const double circularity = 4.0 * std::numbers::pi * area / (perimeter * perimeter);
      if (circularity < params.min_circularity) continue;
      Marker m;
      m.area = area;
      if (sw > 0.0) {
        m.centroid = {sx / sw, sy / sw};
      } else {
        for (auto [x, y] : pixels) m.centroid += Eigen::Vector2d(x, y);
        m.centroid /= area;
      }
      out.push_back(m);
    }
  }
  return out;
}

struct MatchedPair {
  int initial_index = 0;
  int current_index = 0;
  Eigen::Vector2d initial = Eigen::Vector2d::Zero();
  Eigen::Vector2d current = Eigen::Vector2d::Zero();
  Eigen::Vector2d displacement = Eigen::Vector2d::Zero();
};

struct DisplacementField {
  std::vector<MatchedPair> pairs;
  int unmatched_initial = 0;
  int unmatched_current = 0;
};

namespace detail {

inline int nearest(const Eigen::Vector2d& p, const MarkerSet& set) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double d = (set[i].centroid - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace detail

/// Mutual nearest-neighbour matching: (i, c) pair up iff each is the other's nearest marker and
/// they lie within `max_radius`. Ties go to the smaller index.
inline DisplacementField match_markers(const MarkerSet& initial, const MarkerSet& current, double max_radius) {
  DisplacementField field;
  std::vector<int> nearest_initial(current.size());
  for (std::size_t c = 0; c < current.size(); ++c) nearest_initial[c] = detail::nearest(current[c].centroid, initial);
  std::vector<bool> used(current.size(), false);
  for (std::size_t i = 0; i < initial.size(); ++i) {
    const int c = detail::nearest(initial[i].centroid, current);
    if (c < 0 || nearest_initial[static_cast<std::size_t>(c)] != static_cast<int>(i)) continue;
    const Eigen::Vector2d d = current[static_cast<std::size_t>(c)].centroid - initial[i].centroid;
    if (d.norm() > max_radius) continue;
    used[static_cast<std::size_t>(c)] = true;
    field.pairs.push_back({static_cast<int>(i), c, initial[i].centroid, current[static_cast<std::size_t>(c)].centroid, d});
  }
  field.unmatched_initial = static_cast<int>(initial.size() - field.pairs.size());
  field.unmatched_current = static_cast<int>(std::count(used.begin(), used.end(), false));
  return field;
}

/// Regular 6 x 6 lattice of (dx, dy) displacements, stored channel-major: [channel][row][col].
struct DisplacementGrid {
  static constexpr int kSize = 6;
  static constexpr int kChannels = 2;
  static constexpr int kValues = kSize * kSize * kChannels;

  std::array<double, kValues> values{};

  double& at(int channel, int row, int col) { return values[static_cast<std::size_t>((channel * kSize + row) * kSize + col)]; }
  double at(int channel, int row, int col) const {
    return values[static_cast<std::size_t>((channel * kSize + row) * kSize + col)];
  }
  Eigen::Vector2d displacement(int row, int col) const { return {at(0, row, col), at(1, row, col)}; }

  /// Node centres cover the canvas uniformly (cell centres of a 6 x 6 partition).
  static Eigen::Vector2d node(int row, int col, int canvas_width, int canvas_height) {
    return {(col + 0.5) * canvas_width / kSize - 0.5, (row + 0.5) * canvas_height / kSize - 0.5};
  }

  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Inverse-distance weighting over the k = 4 nearest samples, power 2. A node within 1e-9 px of a
/// sample takes its value exactly.
inline DisplacementGrid interpolate_grid(std::span<const Eigen::Vector2d> positions,
                                         std::span<const Eigen::Vector2d> displacements, int canvas_width,
                                         int canvas_height) {
  if (positions.empty()) throw Error("interpolate_grid needs at least one matched marker");
  if (positions.size() != displacements.size()) throw Error("position/displacement count mismatch");
  constexpr std::size_t kNeighbours = 4;
  DisplacementGrid grid;
  std::vector<std::size_t> order(positions.size());
  std::vector<double> dist2(positions.size());
  for (int r = 0; r < DisplacementGrid::kSize; ++r) {
    for (int c = 0; c < DisplacementGrid::kSize; ++c) {
      const Eigen::Vector2d node = DisplacementGrid::node(r, c, canvas_width, canvas_height);
      for (std::size_t i = 0; i < positions.size(); ++i) dist2[i] = (positions[i] - node).squaredNorm();
      std::iota(order.begin(), order.end(), std::size_t{0});
      const std::size_t k = std::min(kNeighbours, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](std::size_t a, std::size_t b) { return dist2[a] != dist2[b] ? dist2[a] < dist2[b] : a < b; });
      Eigen::Vector2d value = Eigen::Vector2d::Zero();
      if (std::sqrt(dist2[order[0]]) < 1e-9) {
        value = displacements[order[0]];
      } else {
        double wsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const double wt = 1.0 / dist2[order[j]];
          value += wt * displacements[order[j]];
          wsum += wt;
        }
        value /= wsum;
      }
      grid.at(0, r, c) = value.x();
      grid.at(1, r, c) = value.y();
    }
  }
  return grid;
}

/// Interpolates matched displacements anchored at their initial (reference) positions.
inline DisplacementGrid interpolate_grid(const DisplacementField& field, int canvas_width, int canvas_height) {
  std::vector<Eigen::Vector2d> pos, disp;
  for (const auto& p : field.pairs) {
    pos.push_back(p.initial);
    disp.push_back(p.displacement);
  }
  return interpolate_grid(pos, disp, canvas_width, canvas_height);
}

struct RoiEntry {
  int unit_index = 0;
  /// Region copied from the raw frame.
  Rect crop;
  /// Where the (upright) crop lands on the stitched canvas.
  Rect placement;
  bool inverted = false;
};

struct RoiSet {
  int canvas_width = 0;
  int canvas_height = 0;
  std::vector<RoiEntry> entries;
};

inline DetectorParams border_rejecting_detector() {
  DetectorParams d;
  d.reject_border = true;
  return d;
}

struct RoiParams {
  DetectorParams detector = border_rejecting_detector();
  /// Tolerance between a marker and its predicted duplicate in the neighbouring tile.
  double match_radius_px = 6.0;
};

namespace detail {

inline ImageU8 upright_tile(const ImageU8& frame, const VisionUnit& u) {
  ImageU8 t = crop(frame, u.rect);
  return u.inverted ? flip_both(t) : t;
}

// Mean (A-local minus B-local) position over markers seen by both tiles; `nominal` is the
// expected offset of B's origin relative to A's.
inline Eigen::Vector2d measure_offset(const MarkerSet& a, const MarkerSet& b, const Eigen::Vector2d& nominal,
                                     double radius, const VisionUnit& ua, const VisionUnit& ub) {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  int n = 0;
  for (const auto& ma : a) {
    double best = radius;
    const Marker* hit = nullptr;
    for (const auto& mb : b) {
      const double d = (ma.centroid - (mb.centroid + nominal)).norm();
      if (d <= best) {
        best = d;
        hit = &mb;
      }
    }
    if (hit) {
      sum += ma.centroid - hit->centroid;
      ++n;
    }
  }
  if (n == 0)
    throw RoiError("no common marker between units " + std::to_string(ua.index) + " and " + std::to_string(ub.index));
  return sum / n;
}

struct Seam {
  int offset = 0;  // rounded origin step from the previous column/row
  int cut = 0;     // first pixel (in the later tile's local frame) kept after the seam
  int keep = 0;    // pixels kept from the earlier tile, local frame
};

inline Seam make_seam(double measured, int extent) {
  Seam s;
  s.offset = static_cast<int>(std::lround(measured));
  const int overlap = extent - s.offset;
  if (overlap <= 0) {
    s.keep = extent;
    s.cut = 0;
  } else {
    s.keep = s.offset + overlap / 2;
    s.cut = s.keep - s.offset;
  }
  return s;
}

}  // namespace detail

/// Derives crop rectangles and canvas placements for the tactile units from a pre-contact frame.
/// Neighbouring tiles that overlap are cut midway through the overlap band, whose width is measured
/// from markers visible in both tiles.
inline RoiSet compute_rois(const ImageU8& initial_frame, const SensorLayout& layout, const RoiParams& params = {}) {
  if (initial_frame.width() != layout.frame_width || initial_frame.height() != layout.frame_height)
    throw LayoutError("frame size does not match layout");
  const auto units = layout.tactile_units();
  if (units.empty()) throw LayoutError("layout has no tactile units");
  std::vector<int> rows, cols;
  for (const auto* u : units) {
    rows.push_back(u->row);
    cols.push_back(u->col);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const auto find = [&](int r, int c) -> const VisionUnit& {
    const auto& u = layout.unit(r, c);
    if (u.role != UnitRole::kTactile) throw LayoutError("tactile units do not form a full grid");
    return u;
  };
  const int w = layout.config.tile_width, h = layout.config.tile_height;

  std::map<int, MarkerSet> markers;
  const auto markers_of = [&](const VisionUnit& u) -> const MarkerSet& {
    auto it = markers.find(u.index);
    if (it == markers.end()) it = markers.emplace(u.index, detect_markers(detail::upright_tile(initial_frame, u), params.detector)).first;
    return it->second;
  };

  std::vector<detail::Seam> col_seams, row_seams;
  for (std::size_t j = 0; j + 1 < cols.size(); ++j) {
    double sum = 0.0;
    for (int r : rows) {
      const auto& a = find(r, cols[j]);
      const auto& b = find(r, cols[j + 1]);
      const Eigen::Vector2d nominal = b.canvas_origin - a.canvas_origin;
      if (w - nominal.x() <= 0.0) {
        sum += nominal.x();
        continue;
      }
      sum += detail::measure_offset(markers_of(a), markers_of(b), nominal, params.match_radius_px, a, b).x();
    }
    col_seams.push_back(detail::make_seam(sum / static_cast<double>(rows.size()), w));
  }
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    double sum = 0.0;
    for (int c : cols) {
      const auto& a = find(rows[i], c);
      const auto& b = find(rows[i + 1], c);
      const Eigen::Vector2d nominal = b.canvas_origin - a.canvas_origin;
      if (h - nominal.y() <= 0.0) {
        sum += nominal.y();
        continue;
      }
      sum += detail::measure_offset(markers_of(a), markers_of(b), nominal, params.match_radius_px, a, b).y();
    }
    row_seams.push_back(detail::make_seam(sum / static_cast<double>(cols.size()), h));
  }

  // Per column: local keep range [lo, hi) and canvas origin; likewise per row.
  const auto ranges = [](const std::vector<detail::Seam>& seams, int extent) {
    const std::size_t n = seams.size() + 1;
    std::vector<int> lo(n, 0), hi(n, extent), origin(n, 0);
    for (std::size_t k = 0; k < seams.size(); ++k) {
      hi[k] = seams[k].keep;
      lo[k + 1] = seams[k].cut;
      origin[k + 1] = origin[k] + seams[k].offset;
    }
    return std::tuple{lo, hi, origin};
  };
  const auto [xlo, xhi, xorg] = ranges(col_seams, w);
  const auto [ylo, yhi, yorg] = ranges(row_seams, h);

  RoiSet set;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& u = find(rows[i], cols[j]);
      RoiEntry e;
      e.unit_index = u.index;
      e.inverted = u.inverted;
      const Rect local{xlo[j], ylo[i], xhi[j] - xlo[j], yhi[i] - ylo[i]};
      const Rect raw = u.inverted ? Rect{w - local.right(), h - local.bottom(), local.width, local.height} : local;
      e.crop = {u.rect.x + raw.x, u.rect.y + raw.y, raw.width, raw.height};
      e.placement = {xorg[j] + local.x, yorg[i] + local.y, local.width, local.height};
      set.canvas_width = std::max(set.canvas_width, e.placement.right());
      set.canvas_height = std::max(set.canvas_height, e.placement.bottom());
      set.entries.push_back(e);
    }
  }
  return set;
}

/// Crops each ROI, undoes the lens inversion and places it on the canvas. Uncovered canvas pixels
/// stay black.
inline ImageU8 stitch(const ImageU8& frame, const RoiSet& rois) {
  ImageU8 canvas(rois.canvas_width, rois.canvas_height, frame.channels());
  for (const auto& e : rois.entries) {
    ImageU8 piece = crop(frame, e.crop);
    if (e.inverted) piece = flip_both(piece);
    paste(canvas, piece, e.placement.x, e.placement.y);
  }
  return canvas;
}

/// Half the smallest spacing between reference markers.
inline double default_match_radius(const MarkerSet& reference) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reference.size(); ++i)
    for (std::size_t j = i + 1; j < reference.size(); ++j)
      best = std::min(best, (reference[i].centroid - reference[j].centroid).norm());
  return std::isfinite(best) ? best / 2.0 : 10.0;
}

struct TrackResult {
  MarkerSet markers;
  DisplacementField field;
  DisplacementGrid grid;
};

/// Reference state of the tactile pipeline: ROIs and markers from the pre-contact frame.
class MarkerTracker {
 public:
  MarkerTracker(const ImageU8& initial_frame, const SensorLayout& layout, const RoiParams& roi_params = {},
                DetectorParams detector = {})
      : rois_(compute_rois(initial_frame, layout, roi_params)), detector_(detector) {
    reference_ = detect_markers(stitch(initial_frame, rois_), detector_);
    max_radius_ = default_match_radius(reference_);
  }

  TrackResult track(const ImageU8& frame) const {
    TrackResult out;
    out.markers = detect_markers(stitch(frame, rois_), detector_);
    out.field = match_markers(reference_, out.markers, max_radius_);
    out.grid = interpolate_grid(out.field, rois_.canvas_width, rois_.canvas_height);
    return out;
  }

  const RoiSet& rois() const { return rois_; }
  const MarkerSet& reference() const { return reference_; }
  double max_radius() const { return max_radius_; }

 private:
  RoiSet rois_;
  DetectorParams detector_;
  MarkerSet reference_;
  double max_radius_ = 0.0;
};

}  // namespace cdv::tactile
