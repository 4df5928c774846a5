#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "compdvision/image.hpp"

namespace cdv::io {

using Json = nlohmann::json;

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

// Netpbm header token, skipping whitespace and '#' comments.
inline std::string next_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

inline ImageU8 read_netpbm(const std::filesystem::path& path, const char* magic, int channels) {
  auto in = open_in(path);
  if (next_token(in) != magic) throw IoError(path.string() + ": expected " + magic);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError(path.string() + ": unsupported dimensions or depth");
  ImageU8 img(w, h, channels);
  in.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.size())) throw IoError(path.string() + ": truncated data");
  return img;
}

inline void write_netpbm(const std::filesystem::path& path, const ImageU8& img, const char* magic) {
  auto out = open_out(path);
  out << magic << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// Binary PPM (P6), 8-bit RGB.
inline void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels() != 3) throw IoError("PPM requires 3 channels");
  detail::write_netpbm(path, img, "P6");
}

inline ImageU8 read_ppm(const std::filesystem::path& path) { return detail::read_netpbm(path, "P6", 3); }

/// Binary PGM (P5), 8-bit gray. Masks are written as 0/255.
inline void write_pgm(const std::filesystem::path& path, const ImageU8& img) {
  if (img.channels() != 1) throw IoError("PGM requires 1 channel");
  detail::write_netpbm(path, img, "P5");
}

inline void write_mask(const std::filesystem::path& path, const Mask& mask) {
  ImageU8 out(mask.width(), mask.height());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = mask.data()[i] ? 255 : 0;
  write_pgm(path, out);
}

inline ImageU8 read_pgm(const std::filesystem::path& path) { return detail::read_netpbm(path, "P5", 1); }

/// Sidecar path for a raster: `depth.f32` -> `depth.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& raster) {
  auto p = raster;
  p.replace_extension(".json");
  return p;
}

/// Writes a little-endian float32 raster (row-major, channels interleaved) plus its JSON sidecar.
/// Extra sidecar keys (units, invalid encoding, ...) come from `meta`.
inline void write_f32(const std::filesystem::path& path, const ImageF& img, Json meta = Json::object()) {
  {
    auto out = detail::open_out(path);
    for (float v : img.data()) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      if constexpr (std::endian::native == std::endian::big)
        bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
      char bytes[4];
      std::memcpy(bytes, &bits, 4);
      out.write(bytes, 4);
    }
    if (!out) throw IoError("write failed: " + path.string());
  }
  meta["width"] = img.width();
  meta["height"] = img.height();
  meta["channels"] = img.channels();
  meta["order"] = "row-major";
  meta["dtype"] = "float32-le";
  auto side = detail::open_out(sidecar_path(path));
  side << meta.dump(2) << '\n';
}

inline ImageF read_f32(const std::filesystem::path& path) {
  Json meta;
  {
    auto side = detail::open_in(sidecar_path(path));
    try {
      side >> meta;
    } catch (const Json::exception& e) {
      throw IoError(sidecar_path(path).string() + ": " + e.what());
    }
  }
  ImageF img(meta.at("width").get<int>(), meta.at("height").get<int>(), meta.value("channels", 1));
  auto in = detail::open_in(path);
  for (float& v : img.data()) {
    char bytes[4];
    if (!in.read(bytes, 4)) throw IoError(path.string() + ": truncated raster");
    std::uint32_t bits;
    std::memcpy(&bits, bytes, 4);
    if constexpr (std::endian::native == std::endian::big)
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
    v = std::bit_cast<float>(bits);
  }
  return img;
}

inline Json read_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

/// Shortest round-trip decimal form, so CSV output is locale-free and deterministic.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace cdv::io
