#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned pixel rectangle, half-open: [x, x + width) x [y, y + height).
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  int right() const { return x + width; }
  int bottom() const { return y + height; }
  long area() const { return static_cast<long>(width) * height; }
  bool empty() const { return width <= 0 || height <= 0; }
  bool contains(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }
  bool inside(int w, int h) const { return x >= 0 && y >= 0 && right() <= w && bottom() <= h; }
  bool overlaps(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Dense interleaved image, row-major, `channels` samples per pixel.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels < 1) throw Error("invalid image dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  /// Sample with edge replication for out-of-range coordinates.
  const T& clamped(int x, int y, int c = 0) const {
    return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
  }

  std::span<T> row(int y) {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
            static_cast<std::size_t>(width_) * channels_};
  }
  std::span<const T> row(int y) const {
    return {data_.data() + static_cast<std::size_t>(y) * width_ * channels_,
            static_cast<std::size_t>(width_) * channels_};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  template <typename U>
  bool same_shape(const Image<U>& o) const {
    return width_ == o.width() && height_ == o.height() && channels_ == o.channels();
  }
  template <typename U>
  bool same_size(const Image<U>& o) const {
    return width_ == o.width() && height_ == o.height();
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_ && c >= 0 && c < channels_);
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;
using ImageD = Image<double>;
/// Binary mask; nonzero means set.
using Mask = Image<std::uint8_t>;

template <typename T>
Image<T> crop(const Image<T>& img, const Rect& r) {
  if (r.empty() || !r.inside(img.width(), img.height())) throw Error("crop rectangle outside image");
  Image<T> out(r.width, r.height, img.channels());
  const auto stride = static_cast<std::size_t>(r.width) * img.channels();
  for (int y = 0; y < r.height; ++y) {
    auto src = img.row(r.y + y).subspan(static_cast<std::size_t>(r.x) * img.channels(), stride);
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

/// Copy `src` into `dst` with its top-left corner at (x, y).
template <typename T>
void paste(Image<T>& dst, const Image<T>& src, int x, int y) {
  if (dst.channels() != src.channels() || !Rect{x, y, src.width(), src.height()}.inside(dst.width(), dst.height()))
    throw Error("paste target outside image");
  for (int r = 0; r < src.height(); ++r) {
    auto s = src.row(r);
    std::copy(s.begin(), s.end(), dst.row(y + r).begin() + static_cast<std::ptrdiff_t>(x) * dst.channels());
  }
}

/// (x, y) -> (y, x).
template <typename T>
Image<T> transpose(const Image<T>& img) {
  Image<T> out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(x, y, c);
  return out;
}

/// Mirror along both axes (180 degree rotation).
template <typename T>
Image<T> flip_both(const Image<T>& img) {
  Image<T> out(img.width(), img.height(), img.channels());
  const std::size_t ch = static_cast<std::size_t>(img.channels());
  const std::size_t n = img.data().size() / std::max<std::size_t>(ch, 1);
  const T* src = img.data().data();
  T* dst = out.data().data();
  for (std::size_t i = 0; i < n; ++i) std::copy(src + i * ch, src + (i + 1) * ch, dst + (n - 1 - i) * ch);
  return out;
}

template <typename T>
Image<T> flip_horizontal(const Image<T>& img) {
  Image<T> out(img.width(), img.height(), img.channels());
  const std::size_t ch = static_cast<std::size_t>(img.channels()), w = static_cast<std::size_t>(img.width());
  for (int y = 0; y < img.height(); ++y) {
    const T* src = img.row(y).data();
    T* dst = out.row(y).data();
    for (std::size_t x = 0; x < w; ++x) std::copy(src + x * ch, src + (x + 1) * ch, dst + (w - 1 - x) * ch);
  }
  return out;
}

/// Integer Rec.601 luma: (77 R + 150 G + 29 B) / 256. Single-channel input is returned as is.
inline ImageU8 to_gray(const ImageU8& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw Error("to_gray expects 1 or 3 channels");
  ImageU8 out(img.width(), img.height(), 1);
  const auto& src = img.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const unsigned v = 77u * src[3 * i] + 150u * src[3 * i + 1] + 29u * src[3 * i + 2];
    dst[i] = static_cast<std::uint8_t>(v >> 8);
  }
  return out;
}

/// Square structuring-element dilation of a binary mask.
inline Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  const int w = m.width(), h = m.height();
  Mask horiz(w, h);
  for (int y = 0; y < h; ++y) {
    int last = -1000000;
    for (int x = 0; x < w; ++x) {
      if (m(x, y)) last = x;
      if (x - last <= radius) horiz(x, y) = 1;
    }
    last = 1000000;
    for (int x = w - 1; x >= 0; --x) {
      if (m(x, y)) last = x;
      if (last - x <= radius) horiz(x, y) = 1;
    }
  }
  Mask out(w, h);
  for (int x = 0; x < w; ++x) {
    int last = -1000000;
    for (int y = 0; y < h; ++y) {
      if (horiz(x, y)) last = y;
      if (y - last <= radius) out(x, y) = 1;
    }
    last = 1000000;
    for (int y = h - 1; y >= 0; --y) {
      if (horiz(x, y)) last = y;
      if (last - y <= radius) out(x, y) = 1;
    }
  }
  return out;
}

}  // namespace cdv
