#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "compdvision/image.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/metrics.hpp"
#include "compdvision/stereo.hpp"
#include "compdvision/synthgen.hpp"

namespace cdv::tuner {

class TunerError : public Error {
 public:
  using Error::Error;
};

/// Infeasible cost marker; compares above every finite cost.
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

inline bool feasible(double cost) { return cost < kInfeasible; }

struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dim() const { return lower.size(); }

  void validate() const {
    if (lower.empty() || lower.size() != upper.size()) throw TunerError("bounds need matching, nonempty lower/upper");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(upper[i] > lower[i]))
        throw TunerError("bounds must be finite with upper > lower");
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
    return true;
  }
};

struct AnnealOptions {
  std::uint64_t seed = 0;
  /// Total cost evaluations, including the initial point and polish probes.
  int budget = 1000;
  double visit = 2.62;         // q_v
  double accept = -5.0;        // q_a
  double initial_temp = 5230.0;
  double restart_temp_ratio = 2e-5;
  int polish_steps = 10;
  /// Worker threads for polish probes (1 = sequential). Results are merged in probe order.
  int threads = 1;
};

struct TraceEntry {
  int index = 0;
  std::vector<double> x;
  double cost = kInfeasible;
  double best_cost = kInfeasible;
};

struct AnnealResult {
  std::vector<double> x;
  double cost = kInfeasible;
  bool feasible = false;
  std::vector<TraceEntry> trace;
};

using Objective = std::function<double(std::span<const double>)>;

namespace detail {

// Generalized-Cauchy visiting distribution of generalized simulated annealing.
class Visitor {
 public:
  static constexpr double kTailLimit = 1e8;
  static constexpr double kMinVisitBound = 1e-10;

  Visitor(const Bounds& b, double qv, std::mt19937_64& rng) : bounds_(b), qv_(qv), rng_(rng) {
    const double f2 = std::exp((4.0 - qv) * std::log(qv - 1.0));
    const double f3 = std::exp((2.0 - qv) * std::log(2.0) / (qv - 1.0));
    f4p_ = std::sqrt(std::numbers::pi) * f2 / (f3 * (3.0 - qv));
    const double f5 = 1.0 / (qv - 1.0) - 0.5;
    f6_ = std::numbers::pi * (1.0 - f5) / std::sin(std::numbers::pi * (1.0 - f5)) / std::exp(std::lgamma(2.0 - f5));
  }

  /// Steps below dim perturb every coordinate; later steps perturb coordinate step - dim.
  std::vector<double> visit(std::span<const double> x, int step, double temperature) {
    const int dim = static_cast<int>(x.size());
    std::vector<double> out(x.begin(), x.end());
    if (step < dim) {
      for (int i = 0; i < dim; ++i) out[static_cast<std::size_t>(i)] = wrap(i, x[static_cast<std::size_t>(i)] + draw(temperature));
    } else {
      const int i = step - dim;
      out[static_cast<std::size_t>(i)] = wrap(i, x[static_cast<std::size_t>(i)] + draw(temperature));
    }
    return out;
  }

 private:
  double draw(double temperature) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double f4 = f4p_ * std::exp(std::log(temperature) / (qv_ - 1.0));
    const double x = normal(rng_) * std::exp(-(qv_ - 1.0) * std::log(f6_ / f4) / (3.0 - qv_));
    const double y = normal(rng_);
    double v = x / std::exp((qv_ - 1.0) * std::log(std::abs(y)) / (3.0 - qv_));
    if (v > kTailLimit)
      v = kTailLimit * unit(rng_);
    else if (v < -kTailLimit)
      v = -kTailLimit * unit(rng_);
    return v;
  }

  double wrap(int i, double v) const {
    const double lo = bounds_.lower[static_cast<std::size_t>(i)];
    const double range = bounds_.upper[static_cast<std::size_t>(i)] - lo;
    double w = std::fmod(std::fmod(v - lo, range) + range, range) + lo;
    if (std::abs(w - lo) < kMinVisitBound) w += kMinVisitBound;
    return w;
  }

  const Bounds& bounds_;
  double qv_;
  std::mt19937_64& rng_;
  double f4p_ = 0.0;
  double f6_ = 0.0;
};

// Evaluation bookkeeping shared by the chain and the polish: enforces the budget and records the
// trace with a non-increasing best.
class Ledger {
 public:
  Ledger(const Objective& fn, int budget) : fn_(fn), budget_(budget) {}

  bool exhausted() const { return static_cast<int>(trace_.size()) >= budget_; }
  int remaining() const { return budget_ - static_cast<int>(trace_.size()); }

  double eval(const std::vector<double>& x) { return record(x, safe(x)); }

  /// Evaluates up to remaining() points, possibly in parallel, recording them in input order.
  std::vector<double> eval_batch(const std::vector<std::vector<double>>& xs, int threads) {
    const std::size_t n = std::min(xs.size(), static_cast<std::size_t>(std::max(remaining(), 0)));
    std::vector<double> costs(n);
    if (threads <= 1 || n <= 1) {
      for (std::size_t i = 0; i < n; ++i) costs[i] = safe(xs[i]);
    } else {
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(threads)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(threads));
        std::vector<std::future<double>> jobs;
        for (std::size_t i = start; i < stop; ++i) jobs.push_back(std::async(std::launch::async, [this, &xs, i] { return safe(xs[i]); }));
        for (std::size_t i = start; i < stop; ++i) costs[i] = jobs[i - start].get();
      }
    }
    for (std::size_t i = 0; i < n; ++i) record(xs[i], costs[i]);
    return costs;
  }

  const std::vector<double>& best_x() const { return best_x_; }
  double best_cost() const { return best_cost_; }
  std::vector<TraceEntry> take_trace() { return std::move(trace_); }

 private:
  double safe(const std::vector<double>& x) const {
    try {
      const double c = fn_(x);
      return std::isnan(c) ? kInfeasible : c;
    } catch (const std::exception&) {
      return kInfeasible;
    }
  }

  double record(const std::vector<double>& x, double c) {
    if (trace_.empty() || c < best_cost_) {
      best_cost_ = c;
      best_x_ = x;
    }
    trace_.push_back({static_cast<int>(trace_.size()), x, c, best_cost_});
    return c;
  }

  const Objective& fn_;
  int budget_;
  std::vector<TraceEntry> trace_;
  std::vector<double> best_x_;
  double best_cost_ = kInfeasible;
};

// Greedy coordinate descent: each step probes x +- h_i on every axis, moves to the best improving
// probe, and halves h when nothing improves.
inline void polish(Ledger& ledger, const Bounds& b, std::vector<double>& x, double& cost, int steps, int threads) {
  std::vector<double> h(b.dim());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = 0.1 * (b.upper[i] - b.lower[i]);
  for (int s = 0; s < steps && !ledger.exhausted(); ++s) {
    std::vector<std::vector<double>> probes;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (const double sign : {-1.0, 1.0}) {
        auto p = x;
        p[i] = std::clamp(x[i] + sign * h[i], b.lower[i], b.upper[i]);
        if (p[i] != x[i]) probes.push_back(std::move(p));
      }
    const auto costs = ledger.eval_batch(probes, threads);
    std::size_t best = costs.size();
    for (std::size_t k = 0; k < costs.size(); ++k)
      if (costs[k] < cost && (best == costs.size() || costs[k] < costs[best])) best = k;
    if (best < costs.size()) {
      x = probes[best];
      cost = costs[best];
    } else {
      for (double& v : h) v *= 0.5;
    }
  }
}

}  // namespace detail

/// Dual annealing: generalized simulated annealing (visiting shape q_v, acceptance shape q_a,
/// T(t) = T0 (2^(q_v-1) - 1) / ((1+t)^(q_v-1) - 1)) with re-annealing below T0 * restart ratio and a
/// coordinate-descent polish of the incumbent whenever a chain improves it. `x0` is evaluated first
/// (a random point is drawn when it is empty). Deterministic for a given seed and thread count
/// independent (probe results are merged in fixed order).
inline AnnealResult dual_anneal(const Bounds& bounds, const Objective& fn, const AnnealOptions& opt,
                                std::vector<double> x0 = {}) {
  bounds.validate();
  if (opt.budget < 1) throw TunerError("budget must be at least 1");
  if (!(opt.visit > 1.0 && opt.visit < 3.0)) throw TunerError("visiting parameter must be in (1, 3)");
  if (!(opt.accept < 0.0)) throw TunerError("acceptance parameter must be negative");
  if (!(opt.initial_temp > 0.0)) throw TunerError("initial temperature must be positive");
  const std::size_t dim = bounds.dim();
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto random_point = [&] {
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = bounds.lower[i] + unit(rng) * (bounds.upper[i] - bounds.lower[i]);
    return x;
  };
  if (x0.empty()) x0 = random_point();
  if (!bounds.contains(x0)) throw TunerError("initial point outside bounds");

  detail::Visitor visitor(bounds, opt.visit, rng);
  detail::Ledger ledger(fn, opt.budget);
  std::vector<double> current = x0;
  double current_cost = ledger.eval(current);
  const double t1 = std::exp((opt.visit - 1.0) * std::log(2.0)) - 1.0;

  for (int it = 0; !ledger.exhausted(); ++it) {
    const double t2 = std::exp((opt.visit - 1.0) * std::log(it + 2.0)) - 1.0;
    const double temperature = opt.initial_temp * t1 / t2;
    if (temperature < opt.initial_temp * opt.restart_temp_ratio) {
      // Re-anneal from a fresh random point.
      current = random_point();
      current_cost = ledger.eval(current);
      it = -1;
      continue;
    }
    const double step_temp = temperature / static_cast<double>(it + 1);
    const double best_before = ledger.best_cost();
    for (std::size_t j = 0; j < 2 * dim && !ledger.exhausted(); ++j) {
      auto candidate = visitor.visit(current, static_cast<int>(j), temperature);
      const double c = ledger.eval(candidate);
      if (c < current_cost) {
        current = std::move(candidate);
        current_cost = c;
        continue;
      }
      // Generalized Metropolis acceptance.
      const double r = unit(rng);
      if (!feasible(c)) continue;
      const double pqv_temp = 1.0 - (1.0 - opt.accept) * (c - current_cost) / step_temp;
      const double pqv = pqv_temp > 0.0 ? std::exp(std::log(pqv_temp) / (1.0 - opt.accept)) : 0.0;
      if (r <= pqv) {
        current = std::move(candidate);
        current_cost = c;
      }
    }
    if (ledger.best_cost() < best_before && feasible(ledger.best_cost()) && !ledger.exhausted()) {
      auto x = ledger.best_x();
      double cost = ledger.best_cost();
      detail::polish(ledger, bounds, x, cost, opt.polish_steps, opt.threads);
      current = std::move(x);
      current_cost = cost;
    }
  }

  AnnealResult out;
  out.x = ledger.best_x();
  out.cost = ledger.best_cost();
  out.feasible = feasible(out.cost);
  out.trace = ledger.take_trace();
  return out;
}

/// Tunable stereo parameters in their continuous encoding:
/// [P1, theta, uniqueness_ratio, lr_threshold, lambda, sigma_color] with P2 = P1 + exp(theta).
struct ParamVector {
  static constexpr std::size_t kDim = 6;
  static constexpr const char* kNames[kDim] = {"p1", "theta", "uniqueness_ratio", "lr_threshold", "lambda", "sigma_color"};
  std::vector<double> values = std::vector<double>(kDim, 0.0);
};

/// Complete stereo configuration; only the six encoded fields are tuned.
struct StereoParams {
  stereo::SgbmParams sgbm;
  stereo::WlsParams wls;
  stereo::MarkerMaskParams masking;
};

inline Bounds default_stereo_bounds() {
  return {{2.0, 0.0, 0.0, 0.0, 0.0, 1.0}, {40.0, std::log(600.0), 0.5, 4.0, 40.0, 40.0}};
}

/// Fields outside the encoding (census window, paths, disparity range) come from `base`.
inline StereoParams decode(std::span<const double> v, const StereoParams& base = {}) {
  if (v.size() != ParamVector::kDim) throw TunerError("parameter vector has the wrong dimension");
  StereoParams p = base;
  p.sgbm.p1 = std::max(1, static_cast<int>(std::lround(v[0])));
  p.sgbm.p2 = p.sgbm.p1 + std::max(1, static_cast<int>(std::lround(std::exp(v[1]))));
  p.sgbm.uniqueness_ratio = std::clamp(v[2], 0.0, 0.5);
  p.sgbm.lr_threshold = std::max(0, static_cast<int>(std::lround(v[3])));
  p.wls.lambda = std::max(0.0, v[4]);
  p.wls.sigma_color = std::max(1e-6, v[5]);
  return p;
}

inline std::vector<double> encode(const StereoParams& p) {
  if (p.sgbm.p2 <= p.sgbm.p1) throw TunerError("encoding needs P2 > P1");
  return {static_cast<double>(p.sgbm.p1), std::log(static_cast<double>(p.sgbm.p2 - p.sgbm.p1)), p.sgbm.uniqueness_ratio,
          static_cast<double>(p.sgbm.lr_threshold), p.wls.lambda, p.wls.sigma_color};
}

struct TrainingSample {
  ImageU8 frame;
  double distance_mm = 0.0;
  StereoPair pair = StereoPair::kLeft;
};

struct SampleScore {
  double fill_rate = 0.0;
  double rmse_percent = kInfeasible;
};

struct StereoCost {
  double cost = kInfeasible;
  std::vector<SampleScore> samples;
};

/// ROI margin (pixels) on top of the d_max columns.
inline constexpr int kRoiMargin = 4;
/// Feasibility threshold on the fill rate, in percent.
inline constexpr double kMinFillRate = 90.0;

/// Sum of RMSE over samples, or infeasible unless every fill rate exceeds kMinFillRate.
inline double aggregate_cost(std::span<const SampleScore> scores) {
  double sum = 0.0;
  for (const auto& s : scores) {
    if (!(s.fill_rate > kMinFillRate) || !feasible(s.rmse_percent)) return kInfeasible;
    sum += s.rmse_percent;
  }
  return sum;
}

/// Sum of per-sample spatial RMSE (percent) if every sample's fill rate exceeds 90 %, else
/// infeasible. A failing sample makes the whole point infeasible.
inline StereoCost stereo_cost(const StereoParams& params, std::span<const TrainingSample> samples,
                              const SensorLayout& layout, int threads = 1) {
  if (samples.empty()) throw TunerError("training set is empty");
  StereoCost out;
  out.samples.resize(samples.size());
  const auto score = [&](std::size_t i) {
    SampleScore s;
    try {
      const auto& t = samples[i];
      const auto r = stereo::estimate_depth(t.frame, layout, t.pair, params.sgbm, params.wls, params.masking);
      const auto roi = metrics::make_roi(r.depth.width(), r.depth.height(), params.sgbm.d_max, kRoiMargin, r.marker_mask);
      s.fill_rate = metrics::fill_rate(r.depth, roi);
      if (s.fill_rate > kMinFillRate)
        s.rmse_percent = metrics::spatial_rmse(r.depth, roi, layout.config.flange_focal_mm + t.distance_mm);
    } catch (const std::exception&) {
      s = {};
    }
    return s;
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) out.samples[i] = score(i);
  } else {
    std::vector<std::future<SampleScore>> jobs;
    for (std::size_t i = 0; i < samples.size(); ++i) jobs.push_back(std::async(std::launch::async, score, i));
    for (std::size_t i = 0; i < samples.size(); ++i) out.samples[i] = jobs[i].get();
  }
  out.cost = aggregate_cost(out.samples);
  return out;
}

/// One noisy synthetic capture per distance, cycling through `pairs`.
inline std::vector<TrainingSample> make_training_set(const SensorLayout& layout, std::span<const double> distances_mm,
                                                     std::span<const StereoPair> pairs, std::uint64_t seed) {
  if (pairs.empty()) throw TunerError("training set needs at least one stereo pair");
  std::vector<TrainingSample> out;
  auto scene = synth::default_scene(layout);
  for (std::size_t i = 0; i < distances_mm.size(); ++i) {
    scene.target_distance_mm = distances_mm[i];
    scene.rng_seed = seed * 7919u + i;
    out.push_back({synth::render_compound_frame(layout, scene).frame, distances_mm[i], pairs[i % pairs.size()]});
  }
  return out;
}

/// Deterministic interleaved split: sample i trains iff floor((i + 1) f) > floor(i f), which spreads
/// the training fraction f evenly over a distance-sorted list.
inline std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> split_training_set(
    std::span<const TrainingSample> samples, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw TunerError("train fraction must lie in (0, 1]");
  std::pair<std::vector<TrainingSample>, std::vector<TrainingSample>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool train = std::floor((i + 1) * train_fraction + 1e-9) > std::floor(i * train_fraction + 1e-9);
    (train ? out.first : out.second).push_back(samples[i]);
  }
  return out;
}

struct TuneResult {
  StereoParams best;
  double best_cost = kInfeasible;
  double initial_cost = kInfeasible;
  AnnealResult anneal;
};

/// Anneals the six stereo parameters starting from `start` (always the first evaluation).
inline TuneResult tune_stereo(std::span<const TrainingSample> samples, const SensorLayout& layout,
                              const StereoParams& start, const AnnealOptions& opt,
                              const Bounds& bounds = default_stereo_bounds(), int sample_threads = 1) {
  const Objective fn = [&](std::span<const double> v) {
    return stereo_cost(decode(v, start), samples, layout, sample_threads).cost;
  };
  auto x0 = encode(start);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = std::clamp(x0[i], bounds.lower[i], bounds.upper[i]);
  TuneResult out;
  out.anneal = dual_anneal(bounds, fn, opt, x0);
  out.initial_cost = out.anneal.trace.front().cost;
  out.best_cost = out.anneal.cost;
  out.best = decode(out.anneal.x, start);
  return out;
}

}  // namespace cdv::tuner
