#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "compdvision/image.hpp"
#include "compdvision/io.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/synthgen.hpp"
#include "compdvision/tactile.hpp"

namespace cdv::force {

using synth::ForceVector;
using tactile::DisplacementGrid;

class ForceError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public ForceError {
 public:
  using ForceError::ForceError;
};

/// Two 3 x 3 same-padded conv layers (2 -> 16 -> 32), FC 1152 -> 64 -> 32 -> 16 with ReLU, linear
/// 16 -> 3 output. Parameters live in one flat vector, layer by layer, weights before biases.
struct ForceNet {
  static constexpr int kSide = DisplacementGrid::kSize;
  static constexpr int kCells = kSide * kSide;
  static constexpr int kIn = DisplacementGrid::kChannels;
  static constexpr int kC1 = 16;
  static constexpr int kC2 = 32;
  static constexpr int kF1 = 64;
  static constexpr int kF2 = 32;
  static constexpr int kF3 = 16;
  static constexpr int kOut = 3;
  static constexpr int kFlat = kC2 * kCells;

  static constexpr std::size_t kConv1W = 0;
  static constexpr std::size_t kConv1B = kConv1W + kC1 * kIn * 9;
  static constexpr std::size_t kConv2W = kConv1B + kC1;
  static constexpr std::size_t kConv2B = kConv2W + kC2 * kC1 * 9;
  static constexpr std::size_t kFc1W = kConv2B + kC2;
  static constexpr std::size_t kFc1B = kFc1W + static_cast<std::size_t>(kF1) * kFlat;
  static constexpr std::size_t kFc2W = kFc1B + kF1;
  static constexpr std::size_t kFc2B = kFc2W + kF2 * kF1;
  static constexpr std::size_t kFc3W = kFc2B + kF2;
  static constexpr std::size_t kFc3B = kFc3W + kF3 * kF2;
  static constexpr std::size_t kOutW = kFc3B + kF3;
  static constexpr std::size_t kOutB = kOutW + kOut * kF3;
  static constexpr std::size_t kParams = kOutB + kOut;

  std::vector<double> params = std::vector<double>(kParams, 0.0);
  std::uint64_t seed = 0;

  /// Declared shapes in storage order, as written to weight files.
  static std::vector<std::pair<std::string, std::vector<int>>> shapes() {
    return {{"conv1.weight", {kC1, kIn, 3, 3}}, {"conv1.bias", {kC1}}, {"conv2.weight", {kC2, kC1, 3, 3}},
            {"conv2.bias", {kC2}},              {"fc1.weight", {kF1, kFlat}}, {"fc1.bias", {kF1}},
            {"fc2.weight", {kF2, kF1}},         {"fc2.bias", {kF2}},   {"fc3.weight", {kF3, kF2}},
            {"fc3.bias", {kF3}},                {"out.weight", {kOut, kF3}}, {"out.bias", {kOut}}};
  }
};

/// Glorot-uniform weights, zero biases. Conv fan-in/out count the 3 x 3 receptive field.
inline ForceNet make_net(std::uint64_t seed) {
  ForceNet net;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  const auto fill = [&](std::size_t offset, std::size_t count, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t i = 0; i < count; ++i) net.params[offset + i] = u(rng);
  };
  using N = ForceNet;
  fill(N::kConv1W, N::kConv1B - N::kConv1W, N::kIn * 9, N::kC1 * 9);
  fill(N::kConv2W, N::kConv2B - N::kConv2W, N::kC1 * 9, N::kC2 * 9);
  fill(N::kFc1W, N::kFc1B - N::kFc1W, N::kFlat, N::kF1);
  fill(N::kFc2W, N::kFc2B - N::kFc2W, N::kF1, N::kF2);
  fill(N::kFc3W, N::kFc3B - N::kFc3W, N::kF2, N::kF3);
  fill(N::kOutW, N::kOutB - N::kOutW, N::kF3, N::kOut);
  return net;
}

/// Pre- and post-ReLU values of every layer for one forward pass.
template <typename T>
struct BasicActivations {
  std::array<T, ForceNet::kIn * ForceNet::kCells> input{};
  std::array<T, ForceNet::kC1 * ForceNet::kCells> z1{};
  std::array<T, ForceNet::kC1 * ForceNet::kCells> a1{};
  std::array<T, ForceNet::kFlat> z2{};
  std::array<T, ForceNet::kFlat> a2{};
  std::array<T, ForceNet::kF1> z3{};
  std::array<T, ForceNet::kF1> a3{};
  std::array<T, ForceNet::kF2> z4{};
  std::array<T, ForceNet::kF2> a4{};
  std::array<T, ForceNet::kF3> z5{};
  std::array<T, ForceNet::kF3> a5{};
  std::array<T, ForceNet::kOut> out{};
};

using Activations = BasicActivations<double>;

namespace detail {

template <typename T>
inline T relu(T v) { return v > T(0) ? v : T(0); }

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat<double>>;

// Unfolds the 3 x 3 zero-padded neighbourhoods: row (i, ky, kx), column = output pixel.
template <typename T>
inline Mat<T> im2col(const T* in, int cin) {
  constexpr int n = ForceNet::kSide;
  Mat<T> col = Mat<T>::Zero(cin * 9, n * n);
  for (int i = 0; i < cin; ++i)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col.row((i * 3 + ky) * 3 + kx).data();
        for (int y = std::max(0, 1 - ky); y < std::min(n, n + 1 - ky); ++y)
          for (int x = std::max(0, 1 - kx); x < std::min(n, n + 1 - kx); ++x)
            row[y * n + x] = in[(i * n + y + ky - 1) * n + x + kx - 1];
      }
  return col;
}

// 3 x 3 zero-padded cross-correlation, channel-major tensors.
template <typename T>
inline void conv_forward(const double* w, const double* b, const T* in, int cin, int cout, T* z) {
  constexpr int n = ForceNet::kSide;
  const ConstMap wm(w, cout, cin * 9);
  Eigen::Map<Mat<T>> zm(z, cout, n * n);
  if constexpr (std::is_same_v<T, double>)
    zm.noalias() = wm * im2col(in, cin);
  else
    zm.noalias() = wm.cast<T>() * im2col(in, cin);
  for (int o = 0; o < cout; ++o) zm.row(o).array() += T(b[o]);
}

// Accumulates weight/bias gradients and (optionally) the input gradient of a conv layer.
inline void conv_backward(const double* w, const double* in, const double* dz, int cin, int cout, double* dw,
                          double* db, double* din) {
  constexpr int n = ForceNet::kSide;
  const ConstMap wm(w, cout, cin * 9);
  const ConstMap g(dz, cout, n * n);
  Eigen::Map<Mat<double>>(dw, cout, cin * 9).noalias() += g * im2col(in, cin).transpose();
  Eigen::Map<Eigen::VectorXd>(db, cout) += g.rowwise().sum();
  if (!din) return;
  const Mat<double> dcol = wm.transpose() * g;
  std::fill(din, din + cin * n * n, 0.0);
  for (int i = 0; i < cin; ++i)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = dcol.row((i * 3 + ky) * 3 + kx).data();
        for (int y = std::max(0, 1 - ky); y < std::min(n, n + 1 - ky); ++y)
          for (int x = std::max(0, 1 - kx); x < std::min(n, n + 1 - kx); ++x)
            din[(i * n + y + ky - 1) * n + x + kx - 1] += row[y * n + x];
      }
}

template <typename T>
inline void dense_forward(const double* w, const double* b, const T* in, int nin, int nout, T* z) {
  const ConstMap wm(w, nout, nin);
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> x(in, nin);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> zv(z, nout);
  if constexpr (std::is_same_v<T, double>)
    zv.noalias() = wm * x;
  else
    zv.noalias() = wm.cast<T>() * x;
  for (int o = 0; o < nout; ++o) z[o] += T(b[o]);
}

inline void dense_backward(const double* w, const double* in, const double* dz, int nin, int nout, double* dw,
                           double* db, double* din) {
  const ConstMap wm(w, nout, nin);
  const Eigen::Map<const Eigen::VectorXd> x(in, nin), g(dz, nout);
  Eigen::Map<Mat<double>>(dw, nout, nin).noalias() += g * x.transpose();
  Eigen::Map<Eigen::VectorXd>(db, nout) += g;
  if (din) Eigen::Map<Eigen::VectorXd>(din, nin).noalias() = wm.transpose() * g;
}

template <typename T, std::size_t N>
inline void relu_into(const std::array<T, N>& z, std::array<T, N>& a) {
  for (std::size_t i = 0; i < N; ++i) a[i] = relu(z[i]);
}

template <std::size_t N>
inline void relu_mask(const std::array<double, N>& z, std::array<double, N>& g) {
  for (std::size_t i = 0; i < N; ++i)
    if (!(z[i] > 0.0)) g[i] = 0.0;
}

}  // namespace detail

template <typename T>
inline void forward(const ForceNet& net, const DisplacementGrid& grid, BasicActivations<T>& act) {
  if (!grid.finite()) throw ForceError("displacement grid is not finite");
  using N = ForceNet;
  const double* p = net.params.data();
  std::copy(grid.values.begin(), grid.values.end(), act.input.begin());
  detail::conv_forward(p + N::kConv1W, p + N::kConv1B, act.input.data(), N::kIn, N::kC1, act.z1.data());
  detail::relu_into(act.z1, act.a1);
  detail::conv_forward(p + N::kConv2W, p + N::kConv2B, act.a1.data(), N::kC1, N::kC2, act.z2.data());
  detail::relu_into(act.z2, act.a2);
  detail::dense_forward(p + N::kFc1W, p + N::kFc1B, act.a2.data(), N::kFlat, N::kF1, act.z3.data());
  detail::relu_into(act.z3, act.a3);
  detail::dense_forward(p + N::kFc2W, p + N::kFc2B, act.a3.data(), N::kF1, N::kF2, act.z4.data());
  detail::relu_into(act.z4, act.a4);
  detail::dense_forward(p + N::kFc3W, p + N::kFc3B, act.a4.data(), N::kF2, N::kF3, act.z5.data());
  detail::relu_into(act.z5, act.a5);
  detail::dense_forward(p + N::kOutW, p + N::kOutB, act.a5.data(), N::kF3, N::kOut, act.out.data());
}

inline ForceVector forward(const ForceNet& net, const DisplacementGrid& grid) {
  Activations act;
  forward(net, grid, act);
  return {act.out[0], act.out[1], act.out[2]};
}

/// Adds dLoss/dparams to `grad` given dLoss/dout for the pass recorded in `act`.
inline void backward(const ForceNet& net, const Activations& act, const std::array<double, ForceNet::kOut>& dout,
                     std::span<double> grad) {
  using N = ForceNet;
  const double* p = net.params.data();
  double* g = grad.data();
  std::array<double, N::kF3> d5{};
  std::array<double, N::kF2> d4{};
  std::array<double, N::kF1> d3{};
  std::array<double, N::kFlat> d2{};
  std::array<double, N::kC1 * N::kCells> d1{};
  detail::dense_backward(p + N::kOutW, act.a5.data(), dout.data(), N::kF3, N::kOut, g + N::kOutW, g + N::kOutB, d5.data());
  detail::relu_mask(act.z5, d5);
  detail::dense_backward(p + N::kFc3W, act.a4.data(), d5.data(), N::kF2, N::kF3, g + N::kFc3W, g + N::kFc3B, d4.data());
  detail::relu_mask(act.z4, d4);
  detail::dense_backward(p + N::kFc2W, act.a3.data(), d4.data(), N::kF1, N::kF2, g + N::kFc2W, g + N::kFc2B, d3.data());
  detail::relu_mask(act.z3, d3);
  detail::dense_backward(p + N::kFc1W, act.a2.data(), d3.data(), N::kFlat, N::kF1, g + N::kFc1W, g + N::kFc1B, d2.data());
  detail::relu_mask(act.z2, d2);
  detail::conv_backward(p + N::kConv2W, act.a1.data(), d2.data(), N::kC1, N::kC2, g + N::kConv2W, g + N::kConv2B, d1.data());
  detail::relu_mask(act.z1, d1);
  detail::conv_backward(p + N::kConv1W, act.input.data(), d1.data(), N::kIn, N::kC1, g + N::kConv1W, g + N::kConv1B,
                        nullptr);
}

inline std::array<double, 3> as_array(const ForceVector& f) { return {f.fx, f.fy, f.fz}; }

/// Squared error averaged over the three outputs.
template <typename T>
inline T sample_loss(const BasicActivations<T>& act, const ForceVector& target) {
  const auto t = as_array(target);
  T s = 0;
  for (std::size_t k = 0; k < 3; ++k) s += (act.out[k] - t[k]) * (act.out[k] - t[k]);
  return s / 3;
}

using ForceSample = synth::ForceSample;

struct ForceDataset {
  std::vector<ForceSample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::vector<ForceSample> subset(std::span<const std::size_t> idx) const {
    std::vector<ForceSample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(samples.at(i));
    return out;
  }
};

/// Portable Fisher-Yates permutation (independent of the standard library's distributions).
inline std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  return idx;
}

/// Disjoint, exhaustive split; the first round(train_fraction * n) shuffled indices train.
inline void split_dataset(ForceDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ForceError("train fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  auto idx = permutation(ds.samples.size(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
  ds.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
}

struct DatasetSpec {
  int count = 3500;
  double train_fraction = 0.7;
  double grid_noise_px = 0.1;
  std::uint64_t seed = 0;
  double fx_min = -1.16, fx_max = 1.27;
  double fz_min = 0.0, fz_max = 1.92;
  /// Contact centres are drawn within this many mm of the canvas centre on each axis.
  double centre_spread_mm = 1.5;
  double radius_min_mm = 1.2, radius_max_mm = 2.0;
};

/// Synthetic indentation protocol: forces drawn uniformly over the declared ranges, contact centre
/// and footprint drawn around the elastomer centre, grid from the analytic membrane model.
inline ForceDataset make_dataset(const DatasetSpec& spec, const SensorLayout& layout) {
  if (spec.count < 2) throw ForceError("dataset needs at least two samples");
  const auto markers = synth::default_marker_layout(layout);
  synth::ElastomerModel elastomer;
  elastomer.px_per_mm = layout.config.elastomer_px_per_mm;
  const synth::ForceModel model;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const Eigen::Vector2d centre((layout.canvas_width - 1) / 2.0, (layout.canvas_height - 1) / 2.0);
  const double spread = spec.centre_spread_mm * elastomer.px_per_mm;
  ForceDataset ds;
  ds.samples.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) {
    ForceVector f;
    f.fx = draw(spec.fx_min, spec.fx_max);
    f.fy = draw(spec.fx_min, spec.fx_max);
    f.fz = draw(spec.fz_min, spec.fz_max);
    const Eigen::Vector2d c = centre + Eigen::Vector2d(draw(-spread, spread), draw(-spread, spread));
    const auto contact = model.contact_for(f, c, draw(spec.radius_min_mm, spec.radius_max_mm));
    ds.samples.push_back(synth::synth_force_sample(contact, markers, layout.canvas_width, layout.canvas_height,
                                                   elastomer, model, spec.grid_noise_px, &rng));
  }
  split_dataset(ds, spec.train_fraction, spec.seed ^ 0x5bd1e995u);
  return ds;
}

struct TrainParams {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int batch = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
};

struct LossPoint {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

/// Mean per-sample loss over a set.
inline double mean_loss(const ForceNet& net, std::span<const ForceSample> set) {
  if (set.empty()) return 0.0;
  Activations act;
  double s = 0.0;
  for (const auto& smp : set) {
    forward(net, smp.grid, act);
    s += sample_loss(act, smp.force);
  }
  return s / static_cast<double>(set.size());
}

/// Mini-batch SGD with momentum on the mean squared error. Epoch 0 of the curve is the untrained
/// net. Gradients are summed in sample order, so results depend only on the seed.
inline std::vector<LossPoint> train(ForceNet& net, std::span<const ForceSample> train_set,
                                    std::span<const ForceSample> validation, const TrainParams& hp) {
  if (train_set.empty()) throw TrainingError("training split is empty");
  if (hp.batch < 1 || hp.epochs < 0) throw TrainingError("batch must be positive and epochs non-negative");
  std::vector<LossPoint> curve{{0, mean_loss(net, train_set), mean_loss(net, validation)}};
  std::mt19937_64 rng(hp.seed);
  std::vector<double> grad(ForceNet::kParams), velocity(ForceNet::kParams, 0.0);
  Activations act;
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto order = permutation(train_set.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(hp.batch));
      const double scale = 2.0 / (3.0 * static_cast<double>(stop - start));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train_set[order[k]];
        forward(net, s.grid, act);
        const auto t = as_array(s.force);
        std::array<double, 3> dout{};
        for (std::size_t j = 0; j < 3; ++j) dout[j] = scale * (act.out[j] - t[j]);
        backward(net, act, dout, grad);
      }
      for (std::size_t i = 0; i < grad.size(); ++i) {
        velocity[i] = hp.momentum * velocity[i] - hp.learning_rate * grad[i];
        net.params[i] += velocity[i];
      }
    }
    const LossPoint pt{epoch, mean_loss(net, train_set), mean_loss(net, validation)};
    if (!std::isfinite(pt.train_loss))
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) + " (loss " + io::fmt(pt.train_loss) +
                          "); lower the learning rate");
    curve.push_back(pt);
  }
  return curve;
}

/// Per-axis root-mean-square error.
inline ForceVector eval_rmse(const ForceNet& net, std::span<const ForceSample> test) {
  if (test.empty()) throw ForceError("test split is empty");
  std::array<double, 3> sq{};
  for (const auto& s : test) {
    const auto p = as_array(forward(net, s.grid));
    const auto t = as_array(s.force);
    for (std::size_t k = 0; k < 3; ++k) sq[k] += (p[k] - t[k]) * (p[k] - t[k]);
  }
  const double n = static_cast<double>(test.size());
  return {std::sqrt(sq[0] / n), std::sqrt(sq[1] / n), std::sqrt(sq[2] / n)};
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  /// Parameters skipped because a perturbation flipped some ReLU.
  int resampled = 0;
};

namespace detail {

template <typename T>
inline std::vector<bool> relu_pattern(const BasicActivations<T>& a) {
  std::vector<bool> p;
  p.reserve(a.z1.size() + a.z2.size() + a.z3.size() + a.z4.size() + a.z5.size());
  for (T v : a.z1) p.push_back(v > 0);
  for (T v : a.z2) p.push_back(v > 0);
  for (T v : a.z3) p.push_back(v > 0);
  for (T v : a.z4) p.push_back(v > 0);
  for (T v : a.z5) p.push_back(v > 0);
  return p;
}

}  // namespace detail

/// Central differences on `count` random parameters against backprop for one sample's loss.
/// Perturbations that change any ReLU's active set straddle a kink and are redrawn. The
/// difference quotient is evaluated in extended precision over the exactly representable step, so
/// cancellation in the loss does not swamp small gradients.
inline GradCheckResult grad_check(const ForceNet& net, const ForceSample& sample, double epsilon, int count = 200,
                                  std::uint64_t seed = 0) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ForceError("epsilon must lie in [1e-7, 1e-3]");
  Activations act;
  forward(net, sample.grid, act);
  const auto t = as_array(sample.force);
  std::array<double, 3> dout{};
  for (std::size_t j = 0; j < 3; ++j) dout[j] = 2.0 * (act.out[j] - t[j]) / 3.0;
  std::vector<double> grad(ForceNet::kParams, 0.0);
  backward(net, act, dout, grad);

  using Wide = long double;
  BasicActivations<Wide> wide;
  forward(net, sample.grid, wide);
  const auto base = detail::relu_pattern(wide);
  GradCheckResult res;
  ForceNet probe = net;
  std::mt19937_64 rng(seed);
  const int max_draws = 50 * count;
  for (int draw = 0; draw < max_draws && res.checked < count; ++draw) {
    const auto i = static_cast<std::size_t>(rng() % ForceNet::kParams);
    const double orig = net.params[i];
    const double hi = orig + epsilon, lo = orig - epsilon;
    probe.params[i] = hi;
    forward(probe, sample.grid, wide);
    const Wide up = sample_loss(wide, sample.force);
    const bool up_same = detail::relu_pattern(wide) == base;
    probe.params[i] = lo;
    forward(probe, sample.grid, wide);
    const Wide down = sample_loss(wide, sample.force);
    const bool down_same = detail::relu_pattern(wide) == base;
    probe.params[i] = orig;
    if (!up_same || !down_same) {
      ++res.resampled;
      continue;
    }
    const double numeric = static_cast<double>((up - down) / (static_cast<Wide>(hi) - static_cast<Wide>(lo)));
    const double analytic = grad[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    res.max_relative_error = std::max(res.max_relative_error, rel);
    ++res.checked;
  }
  return res;
}

/// Weight file: one-line JSON header, then the parameters as little-endian float64.
inline void save_weights(const std::filesystem::path& path, const ForceNet& net) {
  io::Json header;
  header["format"] = "compdvision-forcenet";
  header["version"] = 1;
  header["seed"] = net.seed;
  header["count"] = net.params.size();
  for (const auto& [name, shape] : ForceNet::shapes()) header["shapes"].push_back({{"name", name}, {"shape", shape}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::IoError("cannot open for writing: " + path.string());
  out << header.dump() << '\n';
  for (double v : net.params) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw io::IoError("write failed: " + path.string());
}

inline ForceNet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::IoError("cannot open weights: " + path.string());
  std::string line;
  std::getline(in, line);
  io::Json header;
  try {
    header = io::Json::parse(line);
  } catch (const io::Json::exception& e) {
    throw io::IoError(path.string() + ": bad weight header: " + e.what());
  }
  if (header.value("format", "") != "compdvision-forcenet" || header.value("count", std::size_t{0}) != ForceNet::kParams)
    throw io::IoError(path.string() + ": incompatible weight file");
  ForceNet net;
  net.seed = header.value("seed", std::uint64_t{0});
  for (double& v : net.params) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw io::IoError(path.string() + ": truncated weights");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  return net;
}

/// Grid as a 6 x 6 x 2 interleaved float32 raster.
inline ImageF grid_to_image(const DisplacementGrid& g) {
  ImageF img(DisplacementGrid::kSize, DisplacementGrid::kSize, DisplacementGrid::kChannels);
  for (int r = 0; r < DisplacementGrid::kSize; ++r)
    for (int c = 0; c < DisplacementGrid::kSize; ++c)
      for (int ch = 0; ch < DisplacementGrid::kChannels; ++ch) img(c, r, ch) = static_cast<float>(g.at(ch, r, c));
  return img;
}

inline DisplacementGrid grid_from_image(const ImageF& img) {
  if (img.width() != DisplacementGrid::kSize || img.height() != DisplacementGrid::kSize ||
      img.channels() != DisplacementGrid::kChannels)
    throw ForceError("grid raster must be 6 x 6 x 2");
  DisplacementGrid g;
  for (int r = 0; r < DisplacementGrid::kSize; ++r)
    for (int c = 0; c < DisplacementGrid::kSize; ++c)
      for (int ch = 0; ch < DisplacementGrid::kChannels; ++ch) g.at(ch, r, c) = img(c, r, ch);
  return g;
}

inline std::string grid_filename(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "grid_%05zu.f32", i);
  return buf;
}

/// Directory of `grid_NNNNN.f32` rasters plus `labels.csv` (index, fx, fy, fz, split).
inline void save_dataset(const std::filesystem::path& dir, const ForceDataset& ds) {
  std::filesystem::create_directories(dir);
  std::vector<char> is_train(ds.samples.size(), 0);
  for (auto i : ds.train) is_train.at(i) = 1;
  std::ofstream csv(dir / "labels.csv");
  if (!csv) throw io::IoError("cannot write labels in " + dir.string());
  csv << "index,fx,fy,fz,split\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    io::write_f32(dir / grid_filename(i), grid_to_image(s.grid), {{"units", "px"}, {"layout", "6x6x2 (dx, dy)"}});
    csv << i << ',' << io::fmt(s.force.fx) << ',' << io::fmt(s.force.fy) << ',' << io::fmt(s.force.fz) << ','
        << (is_train[i] ? "train" : "test") << '\n';
  }
  if (!csv) throw io::IoError("write failed: labels.csv");
}

inline ForceDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream csv(dir / "labels.csv");
  if (!csv) throw io::IoError("missing labels.csv in " + dir.string());
  std::string line;
  std::getline(csv, line);
  ForceDataset ds;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(row, field, ',')) cols.push_back(field);
    if (cols.size() != 5) throw io::IoError("malformed labels.csv row: " + line);
    const std::size_t idx = std::stoul(cols[0]);
    if (idx != ds.samples.size()) throw io::IoError("labels.csv indices must be consecutive");
    ForceSample s;
    s.force = {std::stod(cols[1]), std::stod(cols[2]), std::stod(cols[3])};
    s.grid = grid_from_image(io::read_f32(dir / grid_filename(idx)));
    ds.samples.push_back(s);
    (cols[4] == "train" ? ds.train : ds.test).push_back(idx);
  }
  if (ds.samples.empty()) throw io::IoError("dataset is empty: " + dir.string());
  return ds;
}

}  // namespace cdv::force
