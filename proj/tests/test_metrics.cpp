#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/synthgen.hpp"

using namespace cdv;
using namespace cdv::metrics;

namespace {

DepthMap constant_map(int w, int h, float z) {
  DepthMap d(w, h, {150.0, w / 2.0, h / 2.0});
  for (auto& v : d.depth.data()) v = z;
  return d;
}

RoiSpec whole(int w, int h) { return {{0, 0, w, h}, {}}; }

const SensorLayout& layout() {
  static const SensorLayout l = make_layout();
  return l;
}

stereo::DepthResult pipeline_at(double distance, std::uint64_t seed) {
  auto scene = synth::default_scene(layout());
  scene.target_distance_mm = distance;
  scene.rng_seed = seed;
  const auto frame = synth::render_compound_frame(layout(), scene).frame;
  return stereo::estimate_depth(frame, layout(), StereoPair::kLeft, {}, {});
}

RoiSpec roi_of(const stereo::DepthResult& r) {
  return make_roi(r.depth.width(), r.depth.height(), stereo::SgbmParams{}.d_max, 4, r.marker_mask);
}

}  // namespace

TEST(Roi, MakeRoiDropsDisparityBorderAndMargin) {
  const auto roi = make_roi(200, 200, 44, 4);
  EXPECT_EQ(roi.rect.x, 48);
  EXPECT_EQ(roi.rect.y, 4);
  EXPECT_EQ(roi.rect.width, 200 - 44 - 8);
  EXPECT_EQ(roi.rect.height, 192);
  EXPECT_THROW(make_roi(50, 50, 44, 4), MetricError);
}

TEST(Roi, InvalidRoiRejected) {
  const auto d = constant_map(10, 10, 30.0f);
  EXPECT_THROW(fill_rate(d, {{0, 0, 0, 0}, {}}), MetricError);
  EXPECT_THROW(fill_rate(d, {{5, 5, 10, 10}, {}}), MetricError);
  Mask all(10, 10, 1, 1);
  EXPECT_THROW(fill_rate(d, {{0, 0, 10, 10}, all}), MetricError);
  EXPECT_THROW(fill_rate(d, {{0, 0, 10, 10}, Mask(5, 5)}), MetricError);
}

TEST(FillRate, AllValidIsHundred) { EXPECT_EQ(fill_rate(constant_map(20, 10, 30.0f), whole(20, 10)), 100.0); }

TEST(FillRate, HalfInvalidIsFifty) {
  auto d = constant_map(20, 10, 30.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; x += 2) d.invalidate(x, y, Invalid::kLrFail);
  EXPECT_EQ(fill_rate(d, whole(20, 10)), 50.0);
}

TEST(FillRate, ExcludedPixelsDoNotCount) {
  auto d = constant_map(10, 10, 30.0f);
  Mask ex(10, 10);
  for (int x = 0; x < 10; ++x) {
    ex(x, 0) = 1;
    d.invalidate(x, 0, Invalid::kMarkerMasked);
  }
  EXPECT_EQ(fill_rate(d, {{0, 0, 10, 10}, ex}), 100.0);
}

TEST(FillRate, InvariantUnderRelabelingValidValues) {
  std::mt19937_64 rng(1);
  auto d = constant_map(30, 20, 0.0f);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x) {
      d.depth(x, y) = static_cast<float>(10 + rng() % 100);
      if (rng() % 3 == 0) d.invalidate(x, y, Invalid::kUniquenessFail);
    }
  const double base = fill_rate(d, whole(30, 20));
  auto e = d;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x)
      if (e.valid(x, y)) e.depth(x, y) = 1000.0f - e.depth(x, y) * 3.0f;
  EXPECT_EQ(fill_rate(e, whole(30, 20)), base);
}

TEST(FillRate, PipelinePlaneAt40) {
  const auto r = pipeline_at(40.0, 11);
  EXPECT_GE(fill_rate(r.depth, roi_of(r)), 90.0);
}

TEST(ZAccuracy, ExactDepthIsZero) {
  const auto d = constant_map(20, 20, 45.0f);
  EXPECT_NEAR(z_accuracy(d, 40.0, 5.0, whole(20, 20)), 0.0, 1e-5);
  EXPECT_NEAR(z_accuracy(d, 40.0, 5.0, whole(20, 20), false), 0.0, 1e-5);
}

TEST(ZAccuracy, ConstantOffsetWithoutCorrection) {
  const auto d = constant_map(20, 20, 45.3f);
  EXPECT_NEAR(z_accuracy(d, 40.0, 5.0, whole(20, 20), false), 0.3, 1e-5);
}

TEST(ZAccuracy, MedianOfAbsoluteErrors) {
  // Errors -0.4, 0.1, 0.2 (x3 columns): median |e| = 0.2.
  DepthMap d(3, 1);
  d.depth(0, 0) = 44.6f;
  d.depth(1, 0) = 45.1f;
  d.depth(2, 0) = 45.2f;
  EXPECT_NEAR(z_accuracy(d, 40.0, 5.0, whole(3, 1), false), 0.2, 1e-5);
}

TEST(ZAccuracy, NoValidPixelsThrows) {
  auto d = constant_map(5, 5, 30.0f);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) d.invalidate(x, y, Invalid::kLrFail);
  EXPECT_THROW(z_accuracy(d, 25.0, 5.0, whole(5, 5), false), MetricError);
}

TEST(ZAccuracy, InvariantUnderConstantShiftWithPlaneCorrection) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.3);
  DepthMap d(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) d.depth(x, y) = static_cast<float>(45.0 + 0.02 * x - 0.01 * y + n(rng));
  auto e = d;
  for (auto& v : e.depth.data()) v += 2.0f;
  EXPECT_NEAR(z_accuracy(d, 40.0, 5.0, whole(40, 30)), z_accuracy(e, 40.0, 5.0, whole(40, 30)), 1e-4);
}

TEST(ZAccuracy, PipelineCloserIsMoreAccurate) {
  const auto flange = layout().config.flange_focal_mm;
  const auto near = pipeline_at(10.0, 12);
  const auto far = pipeline_at(70.0, 12);
  EXPECT_LT(z_accuracy(near.depth, 10.0, flange, roi_of(near)), z_accuracy(far.depth, 70.0, flange, roi_of(far)));
}

TEST(SpatialRmse, ExactPlaneIsZero) {
  DepthMap d(30, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x) d.depth(x, y) = static_cast<float>(50.0 + 0.125 * x - 0.25 * y);
  EXPECT_NEAR(spatial_rmse(d, whole(30, 20), 50.0), 0.0, 1e-5);
}

TEST(SpatialRmse, GaussianNoiseMonteCarlo) {
  // Residual sd 0.5 mm at 50 mm: sigma / GT = 1 %.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.5);
  DepthMap d(120, 100);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 120; ++x) d.depth(x, y) = static_cast<float>(50.0 + 0.01 * x + n(rng));
  EXPECT_NEAR(spatial_rmse(d, whole(120, 100), 50.0), 100.0 * 0.5 / 50.0, 0.1);
}

TEST(SpatialRmse, InvariantUnderConstantShift) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.2);
  DepthMap d(40, 30);
  for (auto& v : d.depth.data()) v = static_cast<float>(30.0 + n(rng));
  auto e = d;
  for (auto& v : e.depth.data()) v += 5.0f;
  EXPECT_NEAR(spatial_rmse(d, whole(40, 30), 35.0), spatial_rmse(e, whole(40, 30), 35.0), 1e-4);
}

TEST(SpatialRmse, FitFailurePropagates) {
  auto d = constant_map(10, 10, 30.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x)
      if (y != 3) d.invalidate(x, y, Invalid::kLrFail);
  EXPECT_THROW(spatial_rmse(d, whole(10, 10), 35.0), geometry::FitError);
  EXPECT_THROW(spatial_rmse(constant_map(5, 5, 1.0f), whole(5, 5), 0.0), MetricError);
}

TEST(SpatialRmse, PipelineSweepMedian) {
  std::vector<double> rmse;
  for (double d = 10.0; d <= 70.0; d += 15.0) {
    const auto r = pipeline_at(d, 13);
    rmse.push_back(spatial_rmse(r.depth, roi_of(r), d + layout().config.flange_focal_mm));
  }
  EXPECT_LE(median(rmse), 1.2);
}

TEST(TemporalNoise, IdenticalFramesZero) {
  const std::vector<DepthMap> f(3, constant_map(10, 10, 33.0f));
  EXPECT_EQ(temporal_noise(f, whole(10, 10)), 0.0);
}

TEST(TemporalNoise, SingleFrameThrows) {
  const std::vector<DepthMap> f(1, constant_map(10, 10, 33.0f));
  EXPECT_THROW(temporal_noise(f, whole(10, 10)), MetricError);
}

TEST(TemporalNoise, GaussianSamplingDistribution) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.2);
  std::uniform_real_distribution<double> mu(20.0, 60.0);
  const int w = 50, h = 40;
  std::vector<DepthMap> frames(20, DepthMap(w, h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = mu(rng);
      for (auto& f : frames) f.depth(x, y) = static_cast<float>(m + n(rng));
    }
  EXPECT_NEAR(temporal_noise(frames, whole(w, h)), 0.2, 0.15 * 0.2);
}

TEST(TemporalNoise, SampleStandardDeviation) {
  // Two frames 30 and 31: sample sd = 1 / sqrt(2).
  std::vector<DepthMap> f{constant_map(4, 4, 30.0f), constant_map(4, 4, 31.0f)};
  EXPECT_NEAR(temporal_noise(f, whole(4, 4)), 1.0 / std::sqrt(2.0), 1e-6);
}

TEST(TemporalNoise, InvariantUnderFramePermutation) {
  std::mt19937_64 rng(6);
  std::vector<DepthMap> frames;
  for (int i = 0; i < 6; ++i) {
    DepthMap d(12, 9);
    for (auto& v : d.depth.data()) v = static_cast<float>(30.0 + (rng() % 1000) / 1000.0);
    if (i == 2) d.invalidate(3, 3, Invalid::kLrFail);
    frames.push_back(d);
  }
  const double base = temporal_noise(frames, whole(12, 9));
  std::shuffle(frames.begin(), frames.end(), rng);
  EXPECT_DOUBLE_EQ(temporal_noise(frames, whole(12, 9)), base);
  std::reverse(frames.begin(), frames.end());
  EXPECT_DOUBLE_EQ(temporal_noise(frames, whole(12, 9)), base);
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(median({}), MetricError);
}
