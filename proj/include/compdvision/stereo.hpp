#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <vector>

#include "compdvision/geometry.hpp"
#include "compdvision/image.hpp"
#include "compdvision/layout.hpp"
#include "compdvision/maps.hpp"

namespace cdv::stereo {

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Upper bound on max raw cost + P2; keeps every per-path cost below the padding cost and eight
/// summed paths inside 16 bits.
inline constexpr long kMaxPathCost = 7000;

struct SgbmParams {
  /// Census window side (odd, at most 7 so a descriptor fits in 64 bits).
  int census_window = 5;
  /// Hamming costs are summed over a (2r+1)^2 block.
  int block_radius = 1;
  int p1 = 10;
  int p2 = 120;
  double uniqueness_ratio = 0.05;
  int lr_threshold = 1;
  int d_min = 6;
  int d_max = 44;
  int paths = 8;

  int disparities() const { return d_max - d_min + 1; }

  void validate() const {
    if (census_window < 3 || census_window > 7 || census_window % 2 == 0)
      throw ParameterError("census window must be odd and in [3, 7]");
    if (block_radius < 0) throw ParameterError("block radius must be non-negative");
    if (!(p1 > 0 && p2 > p1)) throw ParameterError("penalties need P2 > P1 > 0");
    if (!(uniqueness_ratio >= 0.0 && uniqueness_ratio < 1.0)) throw ParameterError("uniqueness ratio must be in [0, 1)");
    if (lr_threshold < 0) throw ParameterError("lr threshold must be non-negative");
    if (d_min < 0 || d_max <= d_min) throw ParameterError("disparity range needs 0 <= d_min < d_max");
    if (paths != 4 && paths != 8) throw ParameterError("paths must be 4 or 8");
    const long max_raw = static_cast<long>(census_window * census_window - 1) * (2 * block_radius + 1) * (2 * block_radius + 1);
    if (max_raw + p2 > kMaxPathCost) throw ParameterError("P2 or block radius too large for 16-bit aggregation");
  }
};

struct WlsParams {
  double lambda = 8.0;
  double sigma_color = 8.0;
  int iterations = 3;

  void validate() const {
    if (!(lambda >= 0.0)) throw ParameterError("WLS lambda must be non-negative");
    if (!(sigma_color > 0.0)) throw ParameterError("WLS sigma_color must be positive");
    if (iterations < 1) throw ParameterError("WLS needs at least one iteration");
  }
};

/// Matching cost per (pixel, disparity), laid out pixel-major so one pixel's costs are contiguous.
/// Each pixel's run is padded to a multiple of kLanes; padding slots hold kPadCost in raw volumes so
/// that aggregation can work on whole vectors without ever preferring them, and are meaningless in
/// aggregated volumes.
struct CostVolume {
  static constexpr int kLanes = 8;
  static constexpr std::uint16_t kPadCost = 8000;

  int width = 0;
  int height = 0;
  int d_min = 0;
  int d_max = 0;
  std::vector<std::uint16_t> cost;

  CostVolume() = default;
  CostVolume(int w, int h, int dmin, int dmax)
      : width(w), height(h), d_min(dmin), d_max(dmax), cost(static_cast<std::size_t>(w) * h * lanes(), 0) {
    for (std::size_t i = 0; i < cost.size(); i += lanes())
      std::fill(cost.begin() + static_cast<std::ptrdiff_t>(i + disparities()),
                cost.begin() + static_cast<std::ptrdiff_t>(i + lanes()), kPadCost);
  }

  int disparities() const { return d_max - d_min + 1; }
  std::size_t lanes() const { return static_cast<std::size_t>((disparities() + kLanes - 1) / kLanes * kLanes); }
  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * lanes(); }
  std::uint16_t& at(int x, int y, int d) { return cost[offset(x, y) + static_cast<std::size_t>(d - d_min)]; }
  std::uint16_t at(int x, int y, int d) const { return cost[offset(x, y) + static_cast<std::size_t>(d - d_min)]; }
  std::span<const std::uint16_t> pixel(int x, int y) const {
    return {cost.data() + offset(x, y), static_cast<std::size_t>(disparities())};
  }
};

/// Bit k set iff the k-th window neighbour (row-major, centre skipped) is darker than the centre.
/// Borders use edge replication.
inline Image<std::uint64_t> census_transform(const ImageU8& gray, int window) {
  const int r = window / 2, w = gray.width(), h = gray.height();
  Image<std::uint64_t> out(w, h);
  std::vector<int> col(static_cast<std::size_t>(w + 2 * r));
  for (int i = 0; i < w + 2 * r; ++i) col[static_cast<std::size_t>(i)] = std::clamp(i - r, 0, w - 1);
  std::vector<const std::uint8_t*> rows(static_cast<std::size_t>(window));
  for (int y = 0; y < h; ++y) {
    for (int dy = -r; dy <= r; ++dy) rows[static_cast<std::size_t>(dy + r)] = gray.row(std::clamp(y + dy, 0, h - 1)).data();
    const std::uint8_t* centre_row = gray.row(y).data();
    for (int x = 0; x < w; ++x) {
      const auto centre = centre_row[x];
      const int* cx = col.data() + x;  // cx[dx + r] is the clamped column of x + dx
      std::uint64_t bits = 0;
      for (int dy = 0; dy < window; ++dy) {
        const std::uint8_t* row = rows[static_cast<std::size_t>(dy)];
        for (int dx = 0; dx < window; ++dx) {
          if (dx == r && dy == r) continue;
          bits = (bits << 1) | (row[cx[dx]] < centre ? 1u : 0u);
        }
      }
      out(x, y) = bits;
    }
  }
  return out;
}

/// cost(p, d) = sum over the block around p of Hamming(census_L(q), census_R(q - d)); right-image
/// columns left of the border are edge-replicated.
inline CostVolume census_cost_volume(const ImageU8& left, const ImageU8& right, const SgbmParams& params) {
  params.validate();
  if (!left.same_shape(right) || left.channels() != 1) throw ParameterError("cost volume needs equal-size grayscale images");
  if (params.d_max >= left.width()) throw ParameterError("d_max must be smaller than the image width");
  const int w = left.width(), h = left.height(), nd = params.disparities(), br = params.block_radius;
  const auto cl = census_transform(left, params.census_window);
  const auto cr = census_transform(right, params.census_window);

  // Row-wise: Hamming distances, horizontal box sum into a ring of 2r+1 rows, then the vertical
  // sum of the ring. Edge replication on every side.
  CostVolume vol(w, h, params.d_min, params.d_max);
  const std::size_t lanes = vol.lanes(), row_len = static_cast<std::size_t>(w) * lanes;
  const int taps = 2 * br + 1;
  std::vector<std::uint16_t> ham(row_len), ring(row_len * static_cast<std::size_t>(taps)), sum(lanes);
  const auto fill_row = [&](int y, std::uint16_t* dst) {
    const std::uint64_t* crow = &cr(0, y);
    for (int x = 0; x < w; ++x) {
      const std::uint64_t a = cl(x, y);
      auto* hx = ham.data() + static_cast<std::size_t>(x) * lanes;
      const int direct = std::clamp(x - params.d_min + 1, 0, nd);  // k with x - d_min - k >= 0
      const std::uint64_t* base = crow + (x - params.d_min);
      for (int k = 0; k < direct; ++k) hx[k] = static_cast<std::uint16_t>(std::popcount(a ^ base[-k]));
      const auto edge = static_cast<std::uint16_t>(std::popcount(a ^ crow[0]));
      for (int k = direct; k < nd; ++k) hx[k] = edge;
    }
    for (int x = 0; x < w; ++x) {
      auto* d = dst + static_cast<std::size_t>(x) * lanes;
      std::fill(d, d + lanes, std::uint16_t{0});
      for (int dx = -br; dx <= br; ++dx) {
        const auto* src = ham.data() + static_cast<std::size_t>(std::clamp(x + dx, 0, w - 1)) * lanes;
        for (std::size_t k = 0; k < lanes; ++k) d[k] = static_cast<std::uint16_t>(d[k] + src[k]);
      }
    }
  };
  // Ring slot of source row yy (already clamped) is yy mod taps.
  const auto slot = [&](int yy) { return ring.data() + static_cast<std::size_t>(yy % taps) * row_len; };
  for (int yy = 0; yy < std::min(br, h); ++yy) fill_row(yy, slot(yy));
  for (int y = 0; y < h; ++y) {
    if (y + br < h) fill_row(y + br, slot(y + br));
    for (int x = 0; x < w; ++x) {
      std::fill(sum.begin(), sum.end(), std::uint16_t{0});
      for (int dy = -br; dy <= br; ++dy) {
        const auto* src = slot(std::clamp(y + dy, 0, h - 1)) + static_cast<std::size_t>(x) * lanes;
        for (std::size_t k = 0; k < lanes; ++k) sum[k] = static_cast<std::uint16_t>(sum[k] + src[k]);
      }
      std::copy(sum.begin(), sum.begin() + nd, vol.cost.data() + vol.offset(x, y));
    }
  }
  return vol;
}

/// Path direction r: each pixel p takes its prior from p - r.
struct Direction {
  int dx = 0;
  int dy = 0;
};

inline constexpr std::array<Direction, 8> kEightPaths{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, 1}, {1, -1}, {-1, -1}}};

namespace detail {

using I16x8 = std::int16_t __attribute__((vector_size(16)));
using U16x8 = std::uint16_t __attribute__((vector_size(16)));

template <typename V, typename T>
inline V load8(const T* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename V, typename T>
inline void store8(T* p, V v) {
  std::memcpy(p, &v, sizeof v);
}

inline I16x8 vmin(I16x8 a, I16x8 b) { return a < b ? a : b; }

// One SGM recurrence step for a pixel over `lanes` slots (a multiple of CostVolume::kLanes);
// returns min_k L. `prior` is null at the path start; prior[-1] and prior[lanes] are sentinels.
inline std::int16_t path_step(const std::uint16_t* c, const std::int16_t* prior, std::int16_t prior_min,
                              std::int16_t p1, std::int16_t p2, std::size_t lanes, std::int16_t* out,
                              std::uint16_t* acc) {
  static_assert(CostVolume::kLanes == 8);
  I16x8 m = I16x8{} + std::numeric_limits<std::int16_t>::max();
  const I16x8 vp1 = I16x8{} + p1, vmin_prev = I16x8{} + prior_min;
  const I16x8 jump = I16x8{} + static_cast<std::int16_t>(prior_min + p2);
  for (std::size_t b = 0; b < lanes; b += 8) {
    auto l = load8<I16x8>(c + b);  // costs are at most kPadCost, well inside int16
    if (prior) {
      I16x8 v = vmin(load8<I16x8>(prior + b), jump);
      v = vmin(v, load8<I16x8>(prior + b - 1) + vp1);
      v = vmin(v, load8<I16x8>(prior + b + 1) + vp1);
      l = l + v - vmin_prev;
    }
    store8(out + b, l);
    m = vmin(m, l);
    store8(acc + b, load8<U16x8>(acc + b) + reinterpret_cast<U16x8>(l));
  }
  std::int16_t lmin = m[0];
  for (int j = 1; j < 8; ++j) lmin = std::min<std::int16_t>(lmin, m[j]);
  return lmin;
}

}  // namespace detail

/// Adds sum over `dirs` of L_r(p, d) = C(p, d) + min(L_r(p-r, d), L_r(p-r, d+-1) + P1,
/// min_k L_r(p-r, k) + P2) - min_k L_r(p-r, k) into `acc` (same layout as `vol`).
inline void aggregate_paths(const CostVolume& vol, int p1, int p2, std::span<const Direction> dirs,
                            std::vector<std::uint16_t>& acc) {
  const int w = vol.width, h = vol.height;
  const std::size_t lanes = vol.lanes();
  // Path costs stay below max cost + P2 (bounded by SgbmParams::validate) and padding stays below
  // kPadCost + P2, so int16 suffices and the loops vectorize with plain SSE2 signed min.
  const std::size_t stride = lanes + 2;  // one sentinel each side
  constexpr std::int16_t kSentinel = 16000;
  std::vector<std::int16_t> prev_row(static_cast<std::size_t>(w) * stride, kSentinel);
  std::vector<std::int16_t> cur_row(prev_row.size(), kSentinel);
  std::vector<std::int16_t> prev_min(static_cast<std::size_t>(w)), cur_min(static_cast<std::size_t>(w));
  acc.resize(vol.cost.size(), 0);
  const auto p1s = static_cast<std::int16_t>(p1);

  for (const auto dir : dirs) {
    const bool down = dir.dy >= 0;
    const bool rightwards = dir.dx >= 0;
    for (int yi = 0; yi < h; ++yi) {
      const int y = down ? yi : h - 1 - yi;
      const int py = y - dir.dy;
      const bool have_prev_row = dir.dy != 0 && py >= 0 && py < h;
      for (int xi = 0; xi < w; ++xi) {
        const int x = rightwards ? xi : w - 1 - xi;
        const int px = x - dir.dx;
        const std::int16_t* prior = nullptr;
        std::int16_t prior_min = 0;
        if (px >= 0 && px < w) {
          if (dir.dy == 0) {
            prior = cur_row.data() + static_cast<std::size_t>(px) * stride + 1;
            prior_min = cur_min[static_cast<std::size_t>(px)];
          } else if (have_prev_row) {
            prior = prev_row.data() + static_cast<std::size_t>(px) * stride + 1;
            prior_min = prev_min[static_cast<std::size_t>(px)];
          }
        }
        cur_min[static_cast<std::size_t>(x)] = detail::path_step(
            vol.cost.data() + vol.offset(x, y), prior, prior_min, p1s, static_cast<std::int16_t>(p2), lanes,
            cur_row.data() + static_cast<std::size_t>(x) * stride + 1, acc.data() + vol.offset(x, y));
      }
      std::swap(prev_row, cur_row);
      std::swap(prev_min, cur_min);
    }
  }
}

inline CostVolume sgm_aggregate(const CostVolume& vol, const SgbmParams& params) {
  params.validate();
  CostVolume out(vol.width, vol.height, vol.d_min, vol.d_max);
  const std::span<const Direction> dirs(kEightPaths.data(), static_cast<std::size_t>(params.paths));
  aggregate_paths(vol, params.p1, params.p2, dirs, out.cost);
  return out;
}

namespace detail {

// Winner-take-all over the first `n` costs of `c` (k = d - d_min; n may fall short of the full
// range near the border), uniqueness test, clamped parabola. Writes into `out` at (x, y).
inline void select_pixel(const std::uint16_t* c, int n, int d_min, double uniqueness_ratio, DisparityMap& out, int x,
                         int y) {
  if (n <= 0) {
    out.invalidate(x, y, Invalid::kUniquenessFail);
    return;
  }
  std::uint16_t best_cost = c[0];
  for (int k = 1; k < n; ++k) best_cost = std::min(best_cost, c[k]);
  int best = 0;
  while (c[best] != best_cost) ++best;  // first minimum: ties go to the smaller disparity
  std::uint16_t second = std::numeric_limits<std::uint16_t>::max();
  for (int k = 0; k < best - 1; ++k) second = std::min(second, c[k]);
  for (int k = best + 2; k < n; ++k) second = std::min(second, c[k]);
  const bool has_second = best > 1 || best + 2 < n;
  if (has_second && !(second > best_cost * (1.0 + uniqueness_ratio))) {
    out.invalidate(x, y, Invalid::kUniquenessFail);
    return;
  }
  double offset = 0.0;
  if (best > 0 && best < n - 1) {
    const double cm = c[best - 1], cp = c[best + 1];
    const double denom = cm - 2.0 * best_cost + cp;
    if (denom > 0.0) offset = std::clamp((cm - cp) / (2.0 * denom), -0.5, 0.5);
  }
  const double d = d_min + best + offset;
  if (d < d_min) {
    out.invalidate(x, y, Invalid::kBelowMin);
    return;
  }
  out.disparity(x, y) = static_cast<float>(d);
}

}  // namespace detail

enum class Side { kLeft, kRight };

/// Winner-take-all with parabolic sub-pixel refinement and a uniqueness test: the best cost must
/// beat every cost outside its +-1 neighbourhood by the factor (1 + uniqueness_ratio).
///
/// For Side::kRight `agg` is indexed by right pixels (see `right_cost_volume`): right pixel xr at
/// disparity d pairs with left pixel xr + d, so only d < width - xr are candidates.
inline DisparityMap select_disparity(const CostVolume& agg, const SgbmParams& params, Side side = Side::kLeft) {
  const int w = agg.width, h = agg.height, nd = agg.disparities();
  DisparityMap out(w, h, agg.d_min, agg.d_max);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int n = side == Side::kLeft ? nd : std::min(nd, w - x - agg.d_min);
      detail::select_pixel(agg.cost.data() + agg.offset(x, y), n, agg.d_min, params.uniqueness_ratio, out, x, y);
    }
  return out;
}

/// Raw cost volume with the right image as reference: C_R(xr, y, d) = C_L(xr + d, y, d). The census
/// Hamming cost is symmetric, so this is exact; entries with xr + d past the border repeat the
/// border column and are never selected.
inline CostVolume right_cost_volume(const CostVolume& left) {
  CostVolume out(left.width, left.height, left.d_min, left.d_max);
  const int w = left.width, nd = left.disparities();
  for (int y = 0; y < left.height; ++y)
    for (int xr = 0; xr < w; ++xr) {
      auto* dst = out.cost.data() + out.offset(xr, y);
      for (int k = 0; k < nd; ++k) {
        const int x = std::min(xr + left.d_min + k, w - 1);
        dst[k] = left.cost[left.offset(x, y) + static_cast<std::size_t>(k)];
      }
    }
  return out;
}

struct DisparityPair {
  DisparityMap left;
  DisparityMap right;
};

/// Cost volume, aggregation and selection for both reference views. The right view gets its own
/// aggregation over the re-indexed raw volume rather than a reading of the left aggregation.
inline DisparityPair compute_disparity(const ImageU8& left, const ImageU8& right, const SgbmParams& params) {
  const auto raw = census_cost_volume(left, right, params);
  return {select_disparity(sgm_aggregate(raw, params), params, Side::kLeft),
          select_disparity(sgm_aggregate(right_cost_volume(raw), params), params, Side::kRight)};
}

/// Invalidates left pixels whose match in the right map disagrees by more than `threshold` px.
inline void left_right_check(DisparityMap& left, const DisparityMap& right, double threshold) {
  for (int y = 0; y < left.height(); ++y)
    for (int x = 0; x < left.width(); ++x) {
      if (!left.valid(x, y)) continue;
      const double d = left.disparity(x, y);
      const long xr = std::lround(x - d);
      if (xr < 0 || xr >= right.width() || !right.valid(static_cast<int>(xr), y) ||
          std::abs(d - right.disparity(static_cast<int>(xr), y)) > threshold)
        left.invalidate(x, y, Invalid::kLrFail);
    }
}

namespace detail {

// Solves (I + lambda * L) u = f on a chain with edge weights `wt` (wt[i] couples i and i+1) for
// two right-hand sides at once (Thomas algorithm).
inline void solve_chain(std::span<double> f1, std::span<double> f2, std::span<const double> wt, double lambda,
                        std::vector<double>& scratch) {
  const std::size_t n = f1.size();
  if (n == 0 || lambda == 0.0) return;
  scratch.resize(n);
  auto& c = scratch;
  double prev_w = 0.0;
  double denom = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i > 0 ? -lambda * prev_w : 0.0;
    const double cw = i + 1 < n ? wt[i] : 0.0;
    const double ci = -lambda * cw;
    const double b = 1.0 + lambda * (prev_w + cw);
    denom = b - (i > 0 ? a * c[i - 1] : 0.0);
    c[i] = ci / denom;
    if (i > 0) {
      f1[i] = (f1[i] - a * f1[i - 1]) / denom;
      f2[i] = (f2[i] - a * f2[i - 1]) / denom;
    } else {
      f1[i] /= denom;
      f2[i] /= denom;
    }
    prev_w = cw;
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    f1[i] -= c[i] * f1[i + 1];
    f2[i] -= c[i] * f2[i + 1];
  }
}

}  // namespace detail

/// Solves (I + lambda L_g) u = f along a single row, L_g being the guide-weighted chain Laplacian.
inline std::vector<double> smooth_row(std::span<const double> f, std::span<const double> guide, double lambda,
                                      double sigma_color) {
  std::vector<double> u(f.begin(), f.end()), ones(f.size(), 1.0), wt(f.size(), 0.0), scratch;
  for (std::size_t i = 0; i + 1 < f.size(); ++i) wt[i] = std::exp(-std::abs(guide[i] - guide[i + 1]) / sigma_color);
  detail::solve_chain(u, ones, wt, lambda, scratch);
  return u;
}

/// Edge-aware weighted-least-squares smoothing in the fast-global-smoother form: alternating
/// horizontal and vertical 1D solves with lambda_t = 1.5 lambda 4^(T-t) / (4^T - 1). Invalid pixels
/// get zero data weight; the result is the ratio of smoothed (confidence * disparity) to smoothed
/// confidence, which infills them from valid neighbours.
inline DisparityMap wls_refine(const DisparityMap& disp, const ImageU8& guide, const WlsParams& params) {
  params.validate();
  if (guide.width() != disp.width() || guide.height() != disp.height() || guide.channels() != 1)
    throw ParameterError("WLS guide must be a grayscale image of the disparity size");
  const int w = disp.width(), h = disp.height();
  std::vector<double> num(static_cast<std::size_t>(w) * h), den(num.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const bool ok = disp.valid(x, y);
      num[i] = ok ? disp.disparity(x, y) : 0.0;
      den[i] = ok ? 1.0 : 0.0;
    }

  std::vector<double> wh(static_cast<std::size_t>(w) * h, 0.0), wv(wh.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w) wh[i] = std::exp(-std::abs(guide(x, y) - guide(x + 1, y)) / params.sigma_color);
      if (y + 1 < h) wv[i] = std::exp(-std::abs(guide(x, y) - guide(x, y + 1)) / params.sigma_color);
    }

  std::vector<double> col_num(static_cast<std::size_t>(h)), col_den(col_num.size()), col_w(col_num.size()), scratch;
  const int iters = params.iterations;
  for (int t = 1; t <= iters; ++t) {
    const double lambda_t = 1.5 * params.lambda * std::pow(4.0, iters - t) / (std::pow(4.0, iters) - 1.0);
    for (int y = 0; y < h; ++y) {
      const std::size_t o = static_cast<std::size_t>(y) * w;
      detail::solve_chain(std::span(num).subspan(o, static_cast<std::size_t>(w)),
                          std::span(den).subspan(o, static_cast<std::size_t>(w)),
                          std::span<const double>(wh).subspan(o, static_cast<std::size_t>(w)), lambda_t, scratch);
    }
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        col_num[static_cast<std::size_t>(y)] = num[i];
        col_den[static_cast<std::size_t>(y)] = den[i];
        col_w[static_cast<std::size_t>(y)] = wv[i];
      }
      detail::solve_chain(col_num, col_den, col_w, lambda_t, scratch);
      for (int y = 0; y < h; ++y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        num[i] = col_num[static_cast<std::size_t>(y)];
        den[i] = col_den[static_cast<std::size_t>(y)];
      }
    }
  }

  constexpr double kMinConfidence = 1e-3;
  DisparityMap out = disp;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (den[i] <= kMinConfidence) continue;  // keep input value and flag
      const double u = std::min(num[i] / den[i], static_cast<double>(disp.d_max));
      if (u < disp.d_min) {
        out.invalidate(x, y, Invalid::kBelowMin);
      } else {
        out.flags(x, y) = Invalid::kNone;
        out.disparity(x, y) = static_cast<float>(u);
      }
    }
  return out;
}

/// Z = f B / d for valid pixels; `marker_mask` pixels become kMarkerMasked whatever their state.
inline DepthMap disparity_to_depth(const DisparityMap& disp, const geometry::StereoRig& rig, const Mask& marker_mask = {}) {
  if (!marker_mask.empty() && (marker_mask.width() != disp.width() || marker_mask.height() != disp.height()))
    throw ParameterError("marker mask size does not match the disparity map");
  DepthMap depth(disp.width(), disp.height(), geometry::rectified_view(rig.top));
  for (int y = 0; y < disp.height(); ++y)
    for (int x = 0; x < disp.width(); ++x) {
      if (!marker_mask.empty() && marker_mask(x, y)) {
        depth.invalidate(x, y, Invalid::kMarkerMasked);
      } else if (!disp.valid(x, y)) {
        depth.invalidate(x, y, disp.flags(x, y));
      } else if (const auto z = geometry::triangulate_depth(rig.top.focal_px, rig.baseline, disp.disparity(x, y))) {
        depth.depth(x, y) = static_cast<float>(*z);
      } else {
        depth.invalidate(x, y, Invalid::kBelowMin);
      }
    }
  return depth;
}

struct MarkerMaskParams {
  /// Gray level at or below which a rectified pixel is taken as marker.
  int threshold = 45;
  int dilation = 3;
};

inline Mask marker_mask(const ImageU8& gray, const MarkerMaskParams& p) {
  Mask m(gray.width(), gray.height());
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = gray.data()[i] <= p.threshold ? 1 : 0;
  return dilate(m, p.dilation);
}

/// Invalidates left pixels that are markers themselves or whose match lands on a marker in the
/// right view (markers sit on the sensor surface, far outside the disparity range, and hide the
/// scene behind them).
inline void mask_marker_matches(DisparityMap& left, const Mask& left_markers, const Mask& right_markers) {
  for (int y = 0; y < left.height(); ++y)
    for (int x = 0; x < left.width(); ++x) {
      if (left_markers(x, y)) {
        left.invalidate(x, y, Invalid::kMarkerMasked);
        continue;
      }
      if (!left.valid(x, y)) continue;
      const long xr = std::lround(x - left.disparity(x, y));
      if (xr >= 0 && xr < left.width() && right_markers(static_cast<int>(xr), y))
        left.invalidate(x, y, Invalid::kMarkerMasked);
    }
}

struct DepthResult {
  DepthMap depth;
  /// Final (refined) left disparity.
  DisparityMap disparity;
  Mask marker_mask;
  ImageU8 left_gray;
  ImageU8 right_gray;
};

/// Extract -> rectify -> grayscale -> cost -> aggregate -> select (both sides) -> LR check ->
/// WLS -> depth with marker masking.
inline DepthResult estimate_depth_from_tiles(const ImageU8& top_tile, const ImageU8& bottom_tile,
                                             const geometry::StereoRig& rig, const SgbmParams& sgbm,
                                             const WlsParams& wls, const MarkerMaskParams& masking = {}) {
  rig.validate();
  sgbm.validate();
  wls.validate();
  DepthResult out;
  out.left_gray = to_gray(geometry::rectify_tile(top_tile, rig.top, rig.rectify_top).image);
  out.right_gray = to_gray(geometry::rectify_tile(bottom_tile, rig.bottom, rig.rectify_bottom).image);
  out.marker_mask = marker_mask(out.left_gray, masking);
  auto [left, right] = compute_disparity(out.left_gray, out.right_gray, sgbm);
  left_right_check(left, right, sgbm.lr_threshold);
  mask_marker_matches(left, out.marker_mask, marker_mask(out.right_gray, masking));
  out.disparity = wls_refine(left, out.left_gray, wls);
  out.depth = disparity_to_depth(out.disparity, rig, out.marker_mask);
  return out;
}

inline DepthResult estimate_depth(const ImageU8& frame, const SensorLayout& layout, StereoPair pair,
                                  const SgbmParams& sgbm, const WlsParams& wls, const MarkerMaskParams& masking = {}) {
  if (frame.width() != layout.frame_width || frame.height() != layout.frame_height)
    throw LayoutError("frame size does not match layout");
  const auto& top = layout.unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftTop : UnitRole::kStereoRightTop);
  const auto& bottom =
      layout.unit_with_role(pair == StereoPair::kLeft ? UnitRole::kStereoLeftBottom : UnitRole::kStereoRightBottom);
  return estimate_depth_from_tiles(crop(frame, top.rect), crop(frame, bottom.rect), layout.rig(pair), sgbm, wls, masking);
}

struct Tile {
  int unit_index = 0;
  UnitRole role = UnitRole::kUnused;
  Rect source;
  ImageU8 image;
};

/// Exact pixel copies of every unit rectangle whose role passes `keep`.
template <typename Pred>
std::vector<Tile> extract_tiles(const ImageU8& frame, const SensorLayout& layout, Pred keep) {
  std::vector<Tile> out;
  for (const auto& u : layout.units) {
    if (!keep(u.role)) continue;
    if (!u.rect.inside(frame.width(), frame.height())) throw LayoutError("unit rectangle outside frame");
    out.push_back({u.index, u.role, u.rect, crop(frame, u.rect)});
  }
  return out;
}

inline std::vector<Tile> extract_tiles(const ImageU8& frame, const SensorLayout& layout) {
  return extract_tiles(frame, layout, [](UnitRole) { return true; });
}

}  // namespace cdv::stereo
