#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "compdvision/synthgen.hpp"
#include "compdvision/tactile.hpp"
#include "oracles.hpp"

using namespace cdv;
using namespace cdv::tactile;

namespace {

const SensorLayout& layout() {
  static const SensorLayout l = make_layout();
  return l;
}

// White RGB canvas with anti-aliased dark dots; coverage from 8 x 8 supersampling.
ImageU8 dots(int w, int h, const std::vector<Eigen::Vector2d>& centres, double radius) {
  ImageU8 img(w, h, 3, 255);
  for (const auto& c : centres) {
    for (int y = static_cast<int>(c.y() - radius) - 1; y <= static_cast<int>(c.y() + radius) + 1; ++y)
      for (int x = static_cast<int>(c.x() - radius) - 1; x <= static_cast<int>(c.x() + radius) + 1; ++x) {
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        int inside = 0;
        for (int sy = 0; sy < 8; ++sy)
          for (int sx = 0; sx < 8; ++sx) {
            const double px = x - 0.5 + (sx + 0.5) / 8.0, py = y - 0.5 + (sy + 0.5) / 8.0;
            inside += (Eigen::Vector2d(px, py) - c).squaredNorm() <= radius * radius;
          }
        const double cover = inside / 64.0;
        const auto v = static_cast<std::uint8_t>(std::lround(255.0 - cover * (255.0 - 20.0)));
        for (int ch = 0; ch < 3; ++ch) img(x, y, ch) = std::min(img(x, y, ch), v);
      }
  }
  return img;
}

MarkerSet as_markers(const std::vector<Eigen::Vector2d>& pts) {
  MarkerSet m;
  for (const auto& p : pts) m.push_back({p, 50.0});
  return m;
}

// Random points with pairwise spacing above `spacing`.
std::vector<Eigen::Vector2d> spaced_points(std::mt19937_64& rng, int n, double spacing, double extent) {
  std::uniform_real_distribution<double> u(0.0, extent);
  std::vector<Eigen::Vector2d> pts;
  while (static_cast<int>(pts.size()) < n) {
    const Eigen::Vector2d p(u(rng), u(rng));
    if (std::all_of(pts.begin(), pts.end(), [&](const Eigen::Vector2d& q) { return (p - q).norm() > spacing; })) pts.push_back(p);
  }
  return pts;
}

ImageU8 render(const SensorLayout& l, const synth::MarkerLayout& m) {
  auto scene = synth::default_scene(l);
  scene.markers = m;
  return synth::render_compound_frame(l, scene).frame;
}

synth::MarkerLayout centred_grid(const SensorLayout& l, int rows, int cols) {
  auto m = synth::default_marker_layout(l);
  m.rows = rows;
  m.cols = cols;
  const Eigen::Vector2d centre((l.canvas_width - 1) / 2.0, (l.canvas_height - 1) / 2.0);
  m.origin = centre - m.pitch_px * Eigen::Vector2d((cols - 1) / 2.0, (rows - 1) / 2.0);
  return m;
}

}  // namespace

TEST(Rois, TenPixelOverlapShrinksSharedEdgesByFive) {
  SensorConfig cfg;
  cfg.unit_pitch_mm = 190.0 / cfg.elastomer_px_per_mm;
  const auto l = make_layout(cfg);
  ASSERT_EQ(l.canvas_width, 580);
  synth::MarkerLayout m;
  m.rows = m.cols = 4;
  m.pitch_px = 190.0;
  m.origin = {5.0, 5.0};
  m.radius_px = 3.0;
  const auto frame = render(l, m);
  const auto rois = compute_rois(frame, l);
  ASSERT_EQ(rois.entries.size(), 9u);
  const int expect[3] = {195, 190, 195};
  for (const auto& e : rois.entries) {
    const auto& u = l.units[static_cast<std::size_t>(e.unit_index)];
    const int c = u.col - 1, r = u.row;
    EXPECT_EQ(e.crop.width, expect[c]) << "unit " << e.unit_index;
    EXPECT_EQ(e.crop.height, expect[r]) << "unit " << e.unit_index;
    EXPECT_TRUE(u.rect.contains(e.crop.x, e.crop.y));
    EXPECT_TRUE(u.rect.contains(e.crop.right() - 1, e.crop.bottom() - 1));
  }
  EXPECT_EQ(rois.canvas_width, 580);
  EXPECT_EQ(rois.canvas_height, 580);
  const auto found = detect_markers(stitch(frame, rois));
  EXPECT_EQ(found.size(), 16u);
}

TEST(Rois, ZeroOverlapKeepsFullTiles) {
  SensorConfig cfg;
  cfg.unit_pitch_mm = 200.0 / cfg.elastomer_px_per_mm;
  const auto l = make_layout(cfg);
  const auto frame = render(l, centred_grid(l, 6, 8));
  const auto rois = compute_rois(frame, l);
  for (const auto& e : rois.entries) {
    const auto& u = l.units[static_cast<std::size_t>(e.unit_index)];
    EXPECT_EQ(e.crop, u.rect);
    EXPECT_EQ(e.placement.x, 200 * (u.col - 1));
    EXPECT_EQ(e.placement.y, 200 * u.row);
  }
}

TEST(Rois, NoSharedMarkerIsAnError) {
  SensorConfig cfg;
  cfg.unit_pitch_mm = 190.0 / cfg.elastomer_px_per_mm;
  const auto l = make_layout(cfg);
  synth::MarkerLayout m;
  m.rows = m.cols = 4;
  m.pitch_px = 100.0;
  m.origin = {50.0, 50.0};
  EXPECT_THROW(compute_rois(render(l, m), l), RoiError);
}

TEST(Rois, PlacementsTileTheCanvas) {
  const auto frame = render(layout(), synth::default_marker_layout(layout()));
  const auto rois = compute_rois(frame, layout());
  Image<std::uint8_t> cover(rois.canvas_width, rois.canvas_height);
  for (const auto& e : rois.entries)
    for (int y = e.placement.y; y < e.placement.bottom(); ++y)
      for (int x = e.placement.x; x < e.placement.right(); ++x) ++cover(x, y);
  for (auto v : cover.data()) ASSERT_EQ(v, 1);
  EXPECT_EQ(rois.canvas_width, layout().canvas_width);
}

TEST(Stitch, SingleTileIsDoubleFlippedCrop) {
  ImageU8 frame(40, 30, 3);
  std::mt19937_64 rng(1);
  for (auto& v : frame.data()) v = static_cast<std::uint8_t>(rng());
  RoiSet set;
  set.canvas_width = 10;
  set.canvas_height = 8;
  set.entries.push_back({0, {5, 6, 10, 8}, {0, 0, 10, 8}, true});
  const auto out = stitch(frame, set);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(out(x, y, c), frame(5 + 9 - x, 6 + 7 - y, c));
}

TEST(Stitch, DeterministicAndCountPreserving) {
  const auto frame = render(layout(), synth::default_marker_layout(layout()));
  const auto rois = compute_rois(frame, layout());
  const auto a = stitch(frame, rois);
  EXPECT_EQ(a, stitch(frame, compute_rois(frame, layout())));
  EXPECT_EQ(detect_markers(a).size(), synth::default_marker_layout(layout()).centres().size());
}

TEST(Detect, SingleDotCentroid) {
  const auto img = dots(100, 100, {{50.0, 50.0}}, 4.0);
  const auto m = detect_markers(img);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_LE((m[0].centroid - Eigen::Vector2d(50.0, 50.0)).norm(), 0.2);
}

TEST(Detect, SubpixelDotCentroid) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(30.0, 70.0);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d c(u(rng), u(rng));
    const auto m = detect_markers(dots(100, 100, {c}, 4.0));
    ASSERT_EQ(m.size(), 1u);
    EXPECT_LE((m[0].centroid - c).norm(), 0.2) << c.transpose();
  }
}

TEST(Detect, WhiteImageIsEmpty) { EXPECT_TRUE(detect_markers(ImageU8(64, 64, 3, 255)).empty()); }

TEST(Detect, DotGridCount) {
  std::vector<Eigen::Vector2d> c;
  for (int r = 0; r < 6; ++r)
    for (int k = 0; k < 8; ++k) c.emplace_back(30.0 + 53.33 * k, 30.0 + 53.33 * r);
  EXPECT_EQ(detect_markers(dots(440, 330, c, 4.0)).size(), 48u);
}

TEST(Detect, AreaAndShapeFilters) {
  ImageU8 img(100, 100, 3, 255);
  for (int y = 10; y < 12; ++y)
    for (int x = 10; x < 60; ++x)
      for (int c = 0; c < 3; ++c) img(x, y, c) = 0;  // thin bar: fails circularity
  img(80, 80, 0) = img(80, 80, 1) = img(80, 80, 2) = 0;  // single pixel: below min area
  EXPECT_TRUE(detect_markers(img).empty());
  DetectorParams bad;
  bad.hsv.v_min = 0.5;
  bad.hsv.v_max = 0.4;
  EXPECT_ANY_THROW(detect_markers(img, bad));
}

TEST(Detect, IntegerTranslationEquivariance) {
  const std::vector<Eigen::Vector2d> c{{30.3, 40.7}, {70.1, 20.4}, {55.6, 75.2}};
  const auto img = dots(120, 110, c, 4.0);
  const int tx = 7, ty = -5;
  ImageU8 moved(120, 110, 3, 255);
  for (int y = 0; y < 110; ++y)
    for (int x = 0; x < 120; ++x) {
      const int sx = x - tx, sy = y - ty;
      if (sx >= 0 && sy >= 0 && sx < 120 && sy < 110)
        for (int ch = 0; ch < 3; ++ch) moved(x, y, ch) = img(sx, sy, ch);
    }
  auto a = detect_markers(img), b = detect_markers(moved);
  ASSERT_EQ(a.size(), b.size());
  const auto by_pos = [](const Marker& p, const Marker& q) { return p.centroid.x() < q.centroid.x(); };
  std::sort(a.begin(), a.end(), by_pos);
  std::sort(b.begin(), b.end(), by_pos);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b[i].centroid.x(), a[i].centroid.x() + tx, 1e-9);
    EXPECT_NEAR(b[i].centroid.y(), a[i].centroid.y() + ty, 1e-9);
    EXPECT_EQ(a[i].area, b[i].area);
  }
}

TEST(Match, IdentityMatchesAllWithZeroDisplacement) {
  std::mt19937_64 rng(3);
  const auto m = as_markers(spaced_points(rng, 30, 20.0, 300.0));
  const auto f = match_markers(m, m, 10.0);
  ASSERT_EQ(f.pairs.size(), 30u);
  EXPECT_EQ(f.unmatched_initial, 0);
  EXPECT_EQ(f.unmatched_current, 0);
  for (const auto& p : f.pairs) {
    EXPECT_EQ(p.initial_index, p.current_index);
    EXPECT_EQ(p.displacement, Eigen::Vector2d::Zero());
  }
}

TEST(Match, RigidTranslation) {
  std::mt19937_64 rng(4);
  const auto pts = spaced_points(rng, 25, 25.0, 300.0);
  std::vector<Eigen::Vector2d> moved;
  for (const auto& p : pts) moved.push_back(p + Eigen::Vector2d(3.0, -2.0));
  const auto f = match_markers(as_markers(pts), as_markers(moved), 10.0);
  ASSERT_EQ(f.pairs.size(), 25u);
  for (const auto& p : f.pairs) EXPECT_NEAR((p.displacement - Eigen::Vector2d(3.0, -2.0)).norm(), 0.0, 1e-12);
}

TEST(Match, EqualsOptimalAssignment) {
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 100; ++instance) {
    const double max_disp = 4.0;
    const auto pts = spaced_points(rng, 20, 2.0 * max_disp + 1.0, 200.0);
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), len(0.0, max_disp);
    std::vector<Eigen::Vector2d> current(20);
    for (int i = 0; i < 20; ++i) {
      const double a = ang(rng), r = len(rng);
      current[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = pts[static_cast<std::size_t>(i)] + r * Eigen::Vector2d(std::cos(a), std::sin(a));
    }
    const auto expect = oracle::optimal_assignment(pts, current);
    const auto f = match_markers(as_markers(pts), as_markers(current), 2.0 * max_disp);
    ASSERT_EQ(f.pairs.size(), 20u) << "instance " << instance;
    for (const auto& p : f.pairs) ASSERT_EQ(p.current_index, expect[static_cast<std::size_t>(p.initial_index)]) << "instance " << instance;
  }
}

TEST(Match, SwappingNegatesDisplacements) {
  std::mt19937_64 rng(6);
  const auto a = spaced_points(rng, 40, 15.0, 300.0);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<Eigen::Vector2d> b;
  for (const auto& p : a) b.push_back(p + Eigen::Vector2d(n(rng), n(rng)));
  b.push_back({500.0, 500.0});  // unmatched extra
  const auto fwd = match_markers(as_markers(a), as_markers(b), 7.0);
  const auto back = match_markers(as_markers(b), as_markers(a), 7.0);
  ASSERT_EQ(fwd.pairs.size(), back.pairs.size());
  std::set<std::pair<int, int>> s1, s2;
  for (const auto& p : fwd.pairs) s1.insert({p.initial_index, p.current_index});
  for (const auto& p : back.pairs) s2.insert({p.current_index, p.initial_index});
  EXPECT_EQ(s1, s2);
  for (const auto& p : back.pairs) {
    const auto it = std::find_if(fwd.pairs.begin(), fwd.pairs.end(), [&](const MatchedPair& q) { return q.initial_index == p.current_index; });
    ASSERT_NE(it, fwd.pairs.end());
    EXPECT_EQ(p.displacement, -it->displacement);
  }
  EXPECT_EQ(fwd.unmatched_current, back.unmatched_initial);
}

TEST(Match, RadiusLimit) {
  const auto f = match_markers(as_markers({{0.0, 0.0}}), as_markers({{6.0, 0.0}}), 5.0);
  EXPECT_TRUE(f.pairs.empty());
  EXPECT_EQ(f.unmatched_initial, 1);
  EXPECT_EQ(f.unmatched_current, 1);
}

TEST(Grid, SingleMarkerFillsGrid) {
  const std::vector<Eigen::Vector2d> pos{{100.0, 300.0}}, disp{{1.0, 0.0}};
  const auto g = interpolate_grid(pos, disp, 520, 520);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) EXPECT_EQ(g.displacement(r, c), Eigen::Vector2d(1.0, 0.0));
}

TEST(Grid, UniformTranslation) {
  std::mt19937_64 rng(7);
  const auto pos = spaced_points(rng, 30, 30.0, 520.0);
  const std::vector<Eigen::Vector2d> disp(pos.size(), Eigen::Vector2d(0.7, -1.3));
  const auto g = interpolate_grid(pos, disp, 520, 520);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) EXPECT_NEAR((g.displacement(r, c) - Eigen::Vector2d(0.7, -1.3)).norm(), 0.0, 1e-12);
  EXPECT_TRUE(g.finite());
}

TEST(Grid, NodeOnMarkerTakesItsValueExactly) {
  const Eigen::Vector2d node = DisplacementGrid::node(2, 3, 520, 520);
  const std::vector<Eigen::Vector2d> pos{node, node + Eigen::Vector2d(5.0, 0.0)}, disp{{0.25, 0.5}, {9.0, 9.0}};
  const auto g = interpolate_grid(pos, disp, 520, 520);
  EXPECT_EQ(g.displacement(2, 3), Eigen::Vector2d(0.25, 0.5));
}

TEST(Grid, LinearInDisplacements) {
  std::mt19937_64 rng(8);
  const auto pos = spaced_points(rng, 25, 30.0, 520.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Eigen::Vector2d> f1, f2, mix;
  const double a = 1.7, b = -0.4;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    f1.emplace_back(n(rng), n(rng));
    f2.emplace_back(n(rng), n(rng));
    mix.push_back(a * f1.back() + b * f2.back());
  }
  const auto g1 = interpolate_grid(pos, f1, 520, 520), g2 = interpolate_grid(pos, f2, 520, 520);
  const auto gm = interpolate_grid(pos, mix, 520, 520);
  for (int k = 0; k < DisplacementGrid::kValues; ++k)
    EXPECT_NEAR(gm.values[static_cast<std::size_t>(k)], a * g1.values[static_cast<std::size_t>(k)] + b * g2.values[static_cast<std::size_t>(k)], 1e-9);
}

TEST(Grid, GaussianFieldWithinFifteenPercentOfPeak) {
  // Field G(r) * shift sampled at the default markers, compared with G(r) * shift at the nodes.
  const auto& l = layout();
  const auto markers = synth::default_marker_layout(l).centres();
  const synth::ElastomerModel model;
  for (double cx : {180.0, 260.0, 330.0})
    for (double cy : {200.0, 250.0, 320.0})
      for (double radius : {1.0, 1.5, 2.0}) {
        synth::ContactSpec c;
        c.centre_px = {cx, cy};
        c.radius_mm = radius;
        c.tangential_shift_mm = {0.02, -0.015};
        const double sigma = radius * model.px_per_mm;
        const Eigen::Vector2d shift = c.tangential_shift_mm * model.px_per_mm;
        const auto gaussian = [&](const Eigen::Vector2d& p) {
          return std::exp(-(p - c.centre_px).squaredNorm() / (2.0 * sigma * sigma)) * shift;
        };
        const auto moved = synth::deform_markers(markers, c, model);
        std::vector<Eigen::Vector2d> disp;
        double peak = 0.0;
        for (std::size_t i = 0; i < markers.size(); ++i) {
          disp.push_back(moved[i] - markers[i]);
          peak = std::max(peak, disp.back().norm());
        }
        const auto g = interpolate_grid(markers, disp, l.canvas_width, l.canvas_height);
        for (int r = 0; r < 6; ++r)
          for (int k = 0; k < 6; ++k) {
            const Eigen::Vector2d node = DisplacementGrid::node(r, k, l.canvas_width, l.canvas_height);
            EXPECT_LE((g.displacement(r, k) - gaussian(node)).norm(), 0.15 * peak)
                << "contact " << cx << "," << cy << " radius " << radius << " node " << r << "," << k;
          }
      }
}

TEST(Grid, NoMarkersIsAnError) {
  const std::vector<Eigen::Vector2d> none;
  EXPECT_ANY_THROW(interpolate_grid(none, none, 100, 100));
}

TEST(Tracker, RigidShiftOfElastomerMarkers) {
  const auto& l = layout();
  const auto ref_layout = synth::default_marker_layout(l);
  auto moved = ref_layout;
  moved.origin += Eigen::Vector2d(3.0, -2.0);
  const auto count = ref_layout.centres().size();
  const MarkerTracker tracker(render(l, ref_layout), l);
  ASSERT_EQ(tracker.reference().size(), count);
  const auto r = tracker.track(render(l, moved));
  EXPECT_EQ(r.markers.size(), count);
  ASSERT_EQ(r.field.pairs.size(), count);
  for (const auto& p : r.field.pairs) EXPECT_LE((p.displacement - Eigen::Vector2d(3.0, -2.0)).norm(), 0.2);
  for (int row = 0; row < 6; ++row)
    for (int col = 0; col < 6; ++col) EXPECT_LE((r.grid.displacement(row, col) - Eigen::Vector2d(3.0, -2.0)).norm(), 0.2);
  EXPECT_DOUBLE_EQ(tracker.max_radius(), default_match_radius(tracker.reference()));
}

TEST(Tracker, ContactDisplacementMatchesGroundTruth) {
  const auto& l = layout();
  auto scene = synth::default_scene(l);
  const MarkerTracker tracker(synth::render_compound_frame(l, scene).frame, l);
  synth::ContactSpec c;
  c.centre_px = {250.0, 270.0};
  c.normal_depth_mm = 0.2;
  c.tangential_shift_mm = {0.03, 0.01};
  scene.contact = c;
  scene.rng_seed = 1;
  const auto rendered = synth::render_compound_frame(l, scene);
  const auto r = tracker.track(rendered.frame);
  ASSERT_EQ(r.field.pairs.size(), rendered.truth.markers_initial.size());
  for (const auto& p : r.field.pairs) {
    double best = 1e9;
    std::size_t k = 0;
    for (std::size_t i = 0; i < rendered.truth.markers_initial.size(); ++i) {
      const double d = (rendered.truth.markers_initial[i] - p.initial).norm();
      if (d < best) {
        best = d;
        k = i;
      }
    }
    EXPECT_LE((p.displacement - rendered.truth.displacement[k]).norm(), 0.3);
  }
}
