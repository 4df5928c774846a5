#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "compdvision/io.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tuner.hpp"

namespace cdv::sweep {

/// Static-plane capture protocol: `frames` noisy captures at each distance.
struct SweepSpec {
  std::vector<double> distances_mm;
  int frames = 5;
  std::vector<StereoPair> pairs{StereoPair::kLeft, StereoPair::kRight};
  std::uint64_t seed = 0;
};

inline std::vector<double> distance_range(double first, double last, double step) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double d = first + i * step;
    if (d > last + 1e-9) break;
    out.push_back(d);
  }
  return out;
}

/// 10-70 mm in 5 mm steps, 5 frames each, both pairs.
inline SweepSpec default_sweep() {
  SweepSpec s;
  s.distances_mm = distance_range(10.0, 70.0, 5.0);
  return s;
}

struct FrameMetrics {
  double distance_mm = 0.0;
  StereoPair pair = StereoPair::kLeft;
  int frame = 0;
  double fill_rate = 0.0;
  /// NaN when the frame has no valid ROI pixel.
  double z_accuracy_mm = std::numeric_limits<double>::quiet_NaN();
  double rmse_percent = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<FrameMetrics> frames;
  /// One row per (distance, pair): medians over frames, temporal noise across them.
  std::vector<metrics::MetricReport> reports;
};

inline std::uint64_t frame_seed(std::uint64_t seed, double distance_mm, int frame) {
  return seed * 1000003u + static_cast<std::uint64_t>(std::lround(distance_mm * 10.0)) * 131u +
         static_cast<std::uint64_t>(frame);
}

namespace detail {

inline double median_finite(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  return f.empty() ? std::numeric_limits<double>::quiet_NaN() : metrics::median(std::move(f));
}

}  // namespace detail

/// Per-frame metrics for one depth result at a known target distance.
inline FrameMetrics score(const stereo::DepthResult& r, double distance_mm, double flange_focal_mm, int d_max) {
  FrameMetrics m;
  m.distance_mm = distance_mm;
  const auto roi = metrics::make_roi(r.depth.width(), r.depth.height(), d_max, tuner::kRoiMargin, r.marker_mask);
  m.fill_rate = metrics::fill_rate(r.depth, roi);
  try {
    m.z_accuracy_mm = metrics::z_accuracy(r.depth, distance_mm, flange_focal_mm, roi);
    m.rmse_percent = metrics::spatial_rmse(r.depth, roi, flange_focal_mm + distance_mm);
  } catch (const Error&) {
    // Too few valid pixels to fit a plane; metrics stay NaN.
  }
  return m;
}

inline SweepResult run_sweep(const SensorLayout& layout, const tuner::StereoParams& params, const SweepSpec& spec) {
  SweepResult out;
  auto scene = synth::default_scene(layout);
  for (double d : spec.distances_mm) {
    std::map<StereoPair, std::vector<DepthMap>> depths;
    std::map<StereoPair, std::vector<FrameMetrics>> per_pair;
    for (int f = 0; f < spec.frames; ++f) {
      scene.target_distance_mm = d;
      scene.rng_seed = frame_seed(spec.seed, d, f);
      const auto frame = synth::render_compound_frame(layout, scene).frame;
      for (auto pair : spec.pairs) {
        const auto r = stereo::estimate_depth(frame, layout, pair, params.sgbm, params.wls, params.masking);
        auto m = score(r, d, layout.config.flange_focal_mm, params.sgbm.d_max);
        m.pair = pair;
        m.frame = f;
        out.frames.push_back(m);
        per_pair[pair].push_back(m);
        depths[pair].push_back(r.depth);
      }
    }
    for (auto pair : spec.pairs) {
      metrics::MetricReport rep;
      rep.distance_mm = d;
      rep.pair = std::string(to_string(pair));
      std::vector<double> fill, zacc, rmse;
      for (const auto& m : per_pair[pair]) {
        fill.push_back(m.fill_rate);
        zacc.push_back(m.z_accuracy_mm);
        rmse.push_back(m.rmse_percent);
      }
      rep.fill_rate = detail::median_finite(fill);
      rep.z_accuracy_mm = detail::median_finite(zacc);
      rep.rmse_percent = detail::median_finite(rmse);
      rep.temporal_noise_mm = std::numeric_limits<double>::quiet_NaN();
      const auto& ds = depths[pair];
      if (ds.size() >= 2) {
        try {
          const auto& first = ds.front();
          const auto roi = metrics::make_roi(first.width(), first.height(), params.sgbm.d_max, tuner::kRoiMargin);
          rep.temporal_noise_mm = metrics::temporal_noise(ds, roi);
        } catch (const Error&) {
          // No pixel valid in every frame.
        }
      }
      out.reports.push_back(rep);
    }
  }
  return out;
}

inline std::string report_row(const metrics::MetricReport& r) {
  return io::fmt(r.distance_mm) + ',' + r.pair + ',' + io::fmt(r.fill_rate) + ',' + io::fmt(r.z_accuracy_mm) + ',' +
         io::fmt(r.rmse_percent) + ',' + io::fmt(r.temporal_noise_mm);
}

/// Per-distance medians across pairs plus overall medians across every frame.
inline io::Json summary(const SweepResult& s) {
  io::Json j;
  std::map<double, std::vector<const FrameMetrics*>> by_distance;
  for (const auto& m : s.frames) by_distance[m.distance_mm].push_back(&m);
  const auto num = [](double v) { return std::isfinite(v) ? io::Json(v) : io::Json(nullptr); };
  for (const auto& [d, ms] : by_distance) {
    std::vector<double> fill, zacc, rmse;
    for (const auto* m : ms) {
      fill.push_back(m->fill_rate);
      zacc.push_back(m->z_accuracy_mm);
      rmse.push_back(m->rmse_percent);
    }
    j["per_distance"].push_back({{"distance_mm", d},
                                 {"fill_rate", num(detail::median_finite(fill))},
                                 {"z_accuracy_mm", num(detail::median_finite(zacc))},
                                 {"rmse_percent", num(detail::median_finite(rmse))}});
  }
  std::vector<double> fill, rmse;
  for (const auto& m : s.frames) {
    fill.push_back(m.fill_rate);
    rmse.push_back(m.rmse_percent);
  }
  j["median_fill_rate"] = num(detail::median_finite(fill));
  j["median_rmse_percent"] = num(detail::median_finite(rmse));
  return j;
}

}  // namespace cdv::sweep
