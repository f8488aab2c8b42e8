#pragma once

// Volume file formats.
//
// Frame directories hold one binary PPM (P6, maxval 255) per frame named by
// its zero-padded index. The .stv container is
//   "STV1" | u32 dtype (0 = u8, 1 = f32) | u32 C, T, H, W | u32 fps num, den | payload
// with every integer little-endian and the payload row-major (C,T,H,W).

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "staa/volume.hpp"

namespace staa {

namespace fs = std::filesystem;

// Round half away from zero, then clamp to [0, 255].
inline std::uint8_t to_u8(float v) {
  const float r = std::round(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0f, 255.0f));
}

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

struct PpmImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

inline PpmImage parse_ppm(const std::string& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (++digits > 9) throw FormatError(name + ": header number too long");
    }
    if (digits == 0) throw FormatError(name + ": malformed P6 header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError(name + ": not a P6 file");
  pos = 2;
  PpmImage img;
  img.width = read_int();
  img.height = read_int();
  const std::size_t maxval = read_int();
  if (img.width == 0 || img.height == 0) throw FormatError(name + ": zero image extent");
  if (maxval != 255) throw FormatError(name + ": only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError(name + ": malformed P6 header");
  ++pos;
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() - pos < n) throw FormatError(name + ": truncated pixel data");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline bool numeric_stem(const fs::path& p, unsigned long long& value) {
  const std::string stem = p.stem().string();
  if (stem.empty() || stem.size() > 18) return false;
  for (char ch : stem)
    if (!std::isdigit(static_cast<unsigned char>(ch))) return false;
  value = std::stoull(stem);
  return true;
}

}  // namespace detail

// Loads numerically named P6 frames in ascending index order into (3,T,H,W).
inline VideoVolume load_frames(const fs::path& dir, Rational fps = {30, 1}) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<unsigned long long, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    unsigned long long idx = 0;
    if (detail::numeric_stem(entry.path(), idx)) files.emplace_back(idx, entry.path());
  }
  if (files.empty()) throw IoError("no numbered frames in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<detail::PpmImage> frames;
  for (const auto& [idx, path] : files) {
    frames.push_back(detail::parse_ppm(detail::read_file(path), path.filename().string()));
    if (frames.back().width != frames.front().width || frames.back().height != frames.front().height)
      throw FormatError("frame " + path.filename().string() + " has inconsistent dimensions");
  }
  const std::size_t t = frames.size(), h = frames[0].height, w = frames[0].width;
  Tensor<float> data({3, t, h, w});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          data.at(c, f, y, x) = static_cast<float>(frames[f].rgb[(y * w + x) * 3 + c]);
  return VideoVolume(std::move(data), fps);
}

// Writes one P6 file per frame; single-channel volumes are written as gray.
inline void save_frames(const VideoVolume& v, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  const std::size_t c = v.channels(), t = v.frames(), h = v.height(), w = v.width();
  const std::size_t digits = std::max<std::size_t>(4, std::to_string(t - 1).size());
  for (std::size_t f = 0; f < t; ++f) {
    std::string bytes = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    bytes.reserve(bytes.size() + w * h * 3);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch)
          bytes.push_back(static_cast<char>(to_u8(v.data.at(c == 3 ? ch : 0, f, y, x))));
    std::string name = std::to_string(f);
    name.insert(0, digits - name.size(), '0');
    detail::write_file(dir / (name + ".ppm"), bytes);
  }
}

enum class StvType : std::uint32_t { U8 = 0, F32 = 1 };

inline std::string encode_stv(const VideoVolume& v, StvType type) {
  std::string buf = "STV1";
  detail::put_u32(buf, static_cast<std::uint32_t>(type));
  for (auto e : v.data.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(e));
  detail::put_u32(buf, v.fps.num);
  detail::put_u32(buf, v.fps.den);
  if (type == StvType::U8) {
    for (float x : v.data.data()) buf.push_back(static_cast<char>(to_u8(x)));
  } else {
    for (float x : v.data.data()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(x));
  }
  return buf;
}

inline VideoVolume decode_stv(const std::string& bytes, const std::string& name = "stv") {
  constexpr std::size_t header = 4 + 7 * 4;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "STV1", 4) != 0)
    throw FormatError(name + ": bad magic");
  if (bytes.size() < header) throw FormatError(name + ": truncated header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t type = detail::get_u32(p + 4);
  if (type > 1) throw FormatError(name + ": unknown dtype code " + std::to_string(type));
  Shape shape;
  for (int i = 0; i < 4; ++i) {
    const auto e = detail::get_u32(p + 8 + 4 * i);
    if (e == 0) throw FormatError(name + ": zero extent");
    shape.push_back(e);
  }
  const std::uint32_t fn = detail::get_u32(p + 24), fd = detail::get_u32(p + 28);
  if (fn == 0 || fd == 0) throw FormatError(name + ": invalid fps");
  const std::size_t n = shape_numel(shape);
  const std::size_t width = type == 0 ? 1 : 4;
  if (bytes.size() - header < n * width) throw FormatError(name + ": truncated payload");
  if (bytes.size() - header > n * width) throw FormatError(name + ": trailing bytes after payload");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i)
    data[i] = type == 0 ? static_cast<float>(p[header + i])
                        : std::bit_cast<float>(detail::get_u32(p + header + 4 * i));
  if (shape[0] != 1 && shape[0] != 3) throw FormatError(name + ": channel count must be 1 or 3");
  return VideoVolume(Tensor<float>(std::move(shape), std::move(data)), Rational(fn, fd));
}

inline void write_stv(const VideoVolume& v, const fs::path& path, StvType type = StvType::F32) {
  detail::write_file(path, encode_stv(v, type));
}

inline VideoVolume read_stv(const fs::path& path) {
  return decode_stv(detail::read_file(path), path.filename().string());
}

// Reads either a frame directory or an .stv file.
inline VideoVolume load_volume(const fs::path& path) {
  if (fs::is_directory(path)) return load_frames(path);
  return read_stv(path);
}

}  // namespace staa
