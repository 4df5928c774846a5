#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "compdvision/geometry.hpp"
#include "compdvision/image.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/tactile.hpp"

namespace cdv::synth {

class RenderError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kMaxTargetDistanceMm = 70.0;

/// Procedural value noise on the target plane, in millimetres.
struct TextureSpec {
  std::uint64_t seed = 7;
  /// Coarsest lattice cell; each further octave halves it.
  double cell_mm = 1.2;
  int octaves = 5;
  double low = 55.0;
  double high = 205.0;
};

/// Regular grid of dot markers on the elastomer, in stitched-canvas pixels.
struct MarkerLayout {
  int rows = 10;
  int cols = 10;
  double pitch_px = 160.0 / 3.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  double radius_px = 4.0;

  std::vector<Eigen::Vector2d> centres() const {
    std::vector<Eigen::Vector2d> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) out.push_back(origin + pitch_px * Eigen::Vector2d(c, r));
    return out;
  }
};

/// Default 10 x 10 grid centred on the canvas. The pitch is a third of the unit pitch, so every seam
/// between neighbouring tactile tiles carries a marker column/row, and the grid spans nearly the
/// whole canvas so the outer 6 x 6 nodes are interpolated rather than extrapolated.
inline MarkerLayout default_marker_layout(const SensorLayout& layout) {
  MarkerLayout m;
  m.pitch_px = layout.config.unit_pitch_mm * layout.config.elastomer_px_per_mm / 3.0;
  const Eigen::Vector2d centre((layout.canvas_width - 1) / 2.0, (layout.canvas_height - 1) / 2.0);
  m.origin = centre - m.pitch_px * Eigen::Vector2d((m.cols - 1) / 2.0, (m.rows - 1) / 2.0);
  return m;
}

/// Indentation of the elastomer: Gaussian footprint centred at `centre_px` (canvas pixels).
struct ContactSpec {
  Eigen::Vector2d centre_px = Eigen::Vector2d::Zero();
  double normal_depth_mm = 0.0;
  Eigen::Vector2d tangential_shift_mm = Eigen::Vector2d::Zero();
  double radius_mm = 1.5;

  void validate() const {
    if (!(normal_depth_mm >= 0.0)) throw RenderError("contact normal depth must be non-negative");
    if (!(radius_mm > 0.0)) throw RenderError("contact radius must be positive");
  }
};

/// Parametric membrane: displacement = G(r) * (shift + k_n * depth * radial unit vector),
/// G(r) = exp(-r^2 / 2 sigma^2), sigma = radius_mm in canvas pixels.
struct ElastomerModel {
  double px_per_mm = 80.0;
  double k_normal = 0.1;
};

struct ForceVector {
  double fx = 0.0;
  double fy = 0.0;
  double fz = 0.0;

  friend bool operator==(const ForceVector&, const ForceVector&) = default;
};

/// Linear contact-force model. Default gains map the generator's contact ranges onto
/// Fx, Fy in [-1.16, 1.27] N and Fz in [0, 1.92] N.
struct ForceModel {
  double k_tangential = 25.0;  // N per mm of shift
  double k_normal = 3.84;      // N per mm of indentation

  ForceVector force(const ContactSpec& c) const {
    return {k_tangential * c.tangential_shift_mm.x(), k_tangential * c.tangential_shift_mm.y(),
            k_normal * c.normal_depth_mm};
  }
  ContactSpec contact_for(const ForceVector& f, Eigen::Vector2d centre, double radius_mm) const {
    ContactSpec c;
    c.centre_px = centre;
    c.radius_mm = radius_mm;
    c.tangential_shift_mm = {f.fx / k_tangential, f.fy / k_tangential};
    c.normal_depth_mm = f.fz / k_normal;
    return c;
  }
};

struct SceneSpec {
  double target_distance_mm = 35.0;
  TextureSpec texture;
  MarkerLayout markers;
  std::optional<ContactSpec> contact;
  double noise_sigma = 2.0;
  std::uint64_t rng_seed = 0;
};

inline SceneSpec default_scene(const SensorLayout& layout) {
  SceneSpec s;
  s.markers = default_marker_layout(layout);
  return s;
}

struct GroundTruth {
  double target_distance_mm = 0.0;
  double flange_focal_mm = 0.0;
  /// Depth along the camera axis for each stereo unit, in raw tile coordinates.
  std::map<int, ImageF> depth_mm;
  std::vector<Eigen::Vector2d> markers_initial;
  std::vector<Eigen::Vector2d> markers_deformed;
  std::vector<Eigen::Vector2d> displacement;
  ForceVector force;

  double gt_depth_mm() const { return target_distance_mm + flange_focal_mm; }
};

/// Displaced marker centres for a contact; see ElastomerModel.
inline std::vector<Eigen::Vector2d> deform_markers(std::span<const Eigen::Vector2d> markers, const ContactSpec& contact,
                                                   const ElastomerModel& model) {
  if (!(contact.radius_mm > 0.0)) throw RenderError("contact radius must be positive");
  const double sigma = contact.radius_mm * model.px_per_mm;
  const Eigen::Vector2d shift = contact.tangential_shift_mm * model.px_per_mm;
  const double radial = model.k_normal * contact.normal_depth_mm * model.px_per_mm;
  std::vector<Eigen::Vector2d> out;
  out.reserve(markers.size());
  for (const auto& m : markers) {
    const Eigen::Vector2d d = m - contact.centre_px;
    const double r = d.norm();
    const double g = std::exp(-r * r / (2.0 * sigma * sigma));
    Eigen::Vector2d disp = g * shift;
    if (r > 0.0) disp += g * radial * (d / r);
    out.push_back(m + disp);
  }
  return out;
}

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline double lattice(std::uint64_t seed, int octave, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(octave) + 0x51ed27ull));
  h = splitmix(h ^ static_cast<std::uint64_t>(i));
  h = splitmix(h ^ (static_cast<std::uint64_t>(j) * 0x632be59bd9b4e019ull));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace detail

/// Value-noise intensity at (x, y) mm. Octaves whose cell is narrower than twice `footprint_mm`
/// (the pixel footprint) are faded out, so every camera sees a band-limited version of the same
/// surface.
inline double texture_value(const TextureSpec& t, double x, double y, double footprint_mm) {
  double sum = 0.0, norm = 0.0, cell = t.cell_mm, amp = 1.0;
  for (int o = 0; o < t.octaves; ++o, cell *= 0.5, amp *= 0.6) {
    norm += amp;
    const double fade = std::clamp(cell / footprint_mm - 2.0, 0.0, 1.0);
    if (fade <= 0.0) continue;
    const double u = x / cell, v = y / cell;
    const double fu = std::floor(u), fv = std::floor(v);
    const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
    const double su = detail::smooth(u - fu), sv = detail::smooth(v - fv);
    const double a = detail::lattice(t.seed, o, i, j), b = detail::lattice(t.seed, o, i + 1, j);
    const double c = detail::lattice(t.seed, o, i, j + 1), d = detail::lattice(t.seed, o, i + 1, j + 1);
    const double val = (a + (b - a) * su) + ((c + (d - c) * su) - (a + (b - a) * su)) * sv;
    sum += fade * amp * (val - 0.5);
  }
  // Octave sums cluster around the mean; stretch before mapping onto [low, high].
  const double z = std::clamp(0.5 + 2.2 * sum / norm, 0.0, 1.0);
  return t.low + (t.high - t.low) * z;
}

inline constexpr double kMarkerValue = 12.0;
inline constexpr double kBackground[3] = {232.0, 226.0, 218.0};
inline constexpr double kMarkerColour[3] = {28.0, 30.0, 36.0};

namespace detail {

// Anti-aliased coverage of the nearest disk; `edge` is the soft-edge width in the same units.
inline double disk_coverage(const Eigen::Vector2d& p, std::span<const Eigen::Vector2d> centres, double radius,
                            double edge) {
  double best = 0.0;
  for (const auto& c : centres) {
    const double dx = p.x() - c.x(), dy = p.y() - c.y();
    const double reach = radius + edge;
    if (std::abs(dx) > reach || std::abs(dy) > reach) continue;
    const double cov = std::clamp((radius - std::sqrt(dx * dx + dy * dy)) / edge + 0.5, 0.0, 1.0);
    best = std::max(best, cov);
  }
  return best;
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

struct RenderResult {
  ImageU8 frame;
  GroundTruth truth;
};

/// Renders one raw CMOS frame. Stereo tiles image the textured target plane through the
/// (transparent) elastomer, with the marker layer as small dark spots; tactile tiles image the
/// marker layer upside down. Photometric noise is drawn from a per-unit stream seeded by
/// (rng_seed, unit index).
inline RenderResult render_compound_frame(const SensorLayout& layout, const SceneSpec& scene) {
  if (!(scene.target_distance_mm >= 0.0 && scene.target_distance_mm <= kMaxTargetDistanceMm))
    throw RenderError("target distance outside [0, 70] mm");
  if (!(scene.noise_sigma >= 0.0)) throw RenderError("noise sigma must be non-negative");
  if (scene.contact) scene.contact->validate();
  const auto& cfg = layout.config;
  const double scale = cfg.elastomer_px_per_mm;
  const Eigen::Vector2d canvas_centre((layout.canvas_width - 1) / 2.0, (layout.canvas_height - 1) / 2.0);

  RenderResult out;
  auto& gt = out.truth;
  gt.target_distance_mm = scene.target_distance_mm;
  gt.flange_focal_mm = cfg.flange_focal_mm;
  gt.markers_initial = scene.markers.centres();
  for (const auto& m : gt.markers_initial)
    if (m.x() < 0 || m.y() < 0 || m.x() > layout.canvas_width - 1 || m.y() > layout.canvas_height - 1)
      throw RenderError("marker outside the tactile field of view");
  gt.markers_deformed = scene.contact ? deform_markers(gt.markers_initial, *scene.contact, {scale, ElastomerModel{}.k_normal})
                                      : gt.markers_initial;
  for (std::size_t i = 0; i < gt.markers_initial.size(); ++i)
    gt.displacement.push_back(gt.markers_deformed[i] - gt.markers_initial[i]);
  if (scene.contact) gt.force = ForceModel{}.force(*scene.contact);

  const double z_target = cfg.flange_focal_mm + scene.target_distance_mm;
  const double z_elastomer = cfg.flange_focal_mm;
  out.frame = ImageU8(layout.frame_width, layout.frame_height, 3);
  auto& frame = out.frame;
  const auto& markers = gt.markers_deformed;

  for (const auto& u : layout.units) {
    std::seed_seq seq{static_cast<std::uint32_t>(scene.rng_seed), static_cast<std::uint32_t>(scene.rng_seed >> 32),
                      static_cast<std::uint32_t>(u.index), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    const int w = u.rect.width, h = u.rect.height;

    if (is_stereo(u.role)) {
      ImageF depth(w, h, 1, static_cast<float>(z_target));
      const double footprint = z_target / u.camera.focal_px;
      // Marker spots: canvas radius with a one-pixel soft edge.
      const double canvas_per_px = z_elastomer * scale / u.camera.focal_px;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const Eigen::Vector3d ray = geometry::pixel_ray(u.camera, Eigen::Vector2d(x, y));
          const Eigen::Vector3d on_target = u.camera.pose.translation + z_target * ray;
          double v = texture_value(scene.texture, on_target.x(), on_target.y(), footprint);
          const Eigen::Vector3d on_skin = u.camera.pose.translation + z_elastomer * ray;
          const Eigen::Vector2d q = canvas_centre + scale * on_skin.head<2>();
          const double a = detail::disk_coverage(q, markers, scene.markers.radius_px, canvas_per_px);
          v = v * (1.0 - a) + kMarkerValue * a;
          const double n = scene.noise_sigma > 0.0 ? scene.noise_sigma * noise(rng) : 0.0;
          const auto px = detail::to_u8(v + n);
          for (int c = 0; c < 3; ++c) frame(u.rect.x + x, u.rect.y + y, c) = px;
        }
      }
      gt.depth_mm.emplace(u.index, std::move(depth));
    } else if (u.role == UnitRole::kTactile) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int ux = u.inverted ? w - 1 - x : x, uy = u.inverted ? h - 1 - y : y;
          const Eigen::Vector2d q = u.canvas_origin + Eigen::Vector2d(ux, uy);
          const double a = detail::disk_coverage(q, markers, scene.markers.radius_px, 1.0);
          for (int c = 0; c < 3; ++c) {
            const double v = kBackground[c] * (1.0 - a) + kMarkerColour[c] * a;
            const double n = scene.noise_sigma > 0.0 ? scene.noise_sigma * noise(rng) : 0.0;
            frame(u.rect.x + x, u.rect.y + y, c) = detail::to_u8(v + n);
          }
        }
      }
    }
  }
  return out;
}

/// A displacement grid and the force that produced it.
struct ForceSample {
  tactile::DisplacementGrid grid;
  ForceVector force;
};

/// Analytic force sample: markers displaced by `contact`, interpolated onto the 6 x 6 grid at their
/// reference positions, plus optional i.i.d. grid noise (pixels).
inline ForceSample synth_force_sample(const ContactSpec& contact, const MarkerLayout& markers, int canvas_width,
                                      int canvas_height, const ElastomerModel& elastomer = {},
                                      const ForceModel& forces = {}, double grid_noise_px = 0.0,
                                      std::mt19937_64* rng = nullptr) {
  contact.validate();
  const auto initial = markers.centres();
  const auto moved = deform_markers(initial, contact, elastomer);
  std::vector<Eigen::Vector2d> disp(initial.size());
  for (std::size_t i = 0; i < initial.size(); ++i) disp[i] = moved[i] - initial[i];
  ForceSample s;
  s.grid = tactile::interpolate_grid(initial, disp, canvas_width, canvas_height);
  if (grid_noise_px > 0.0) {
    if (!rng) throw Error("grid noise requires a random stream");
    std::normal_distribution<double> noise(0.0, grid_noise_px);
    for (double& v : s.grid.values) v += noise(*rng);
  }
  s.force = forces.force(contact);
  return s;
}

}  // namespace cdv::synth
