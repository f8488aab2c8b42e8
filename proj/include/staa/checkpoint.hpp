#pragma once

// Checkpoint container:
//   "STAA" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | name | u8 rank | rank x u32 extents | f32 payload
//   u64 step counter
// All integers and floats little-endian. Tensors are written in name order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>

#include "staa/io.hpp"
#include "staa/tensor.hpp"

namespace staa {

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, Tensor<float>> tensors;
  std::uint64_t step = 0;

  bool operator==(const Checkpoint&) const = default;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string buf = "STAA";
  detail::put_u32(buf, Checkpoint::kVersion);
  detail::put_u32(buf, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    if (name.size() > 0xFFFF) throw FormatError("tensor name too long: " + name.substr(0, 32) + "...");
    if (t.rank() > 0xFF) throw FormatError("tensor rank too large for " + name);
    buf.push_back(static_cast<char>(name.size() & 0xFF));
    buf.push_back(static_cast<char>(name.size() >> 8));
    buf += name;
    buf.push_back(static_cast<char>(t.rank()));
    for (auto e : t.shape()) detail::put_u32(buf, static_cast<std::uint32_t>(e));
    for (float v : t.data()) detail::put_u32(buf, std::bit_cast<std::uint32_t>(v));
  }
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((ck.step >> (8 * i)) & 0xFF));
  return buf;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name = "checkpoint") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw FormatError(name + ": truncated");
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "STAA", 4) != 0) throw FormatError(name + ": bad magic");
  pos = 4;
  need(8);
  const std::uint32_t version = detail::get_u32(p + pos);
  if (version != Checkpoint::kVersion)
    throw FormatError(name + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(p + pos + 4);
  pos += 8;
  Checkpoint ck;
  for (std::uint32_t k = 0; k < count; ++k) {
    need(2);
    const std::size_t len = p[pos] | (static_cast<std::size_t>(p[pos + 1]) << 8);
    pos += 2;
    need(len + 1);
    std::string tname(bytes.data() + pos, len);
    pos += len;
    const std::size_t rank = p[pos++];
    need(4 * rank);
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i, pos += 4) {
      const auto e = detail::get_u32(p + pos);
      if (e == 0) throw FormatError(name + ": zero extent in " + tname);
      shape.push_back(e);
    }
    const std::size_t n = shape_numel(shape);
    if ((bytes.size() - pos) / 4 < n) throw FormatError(name + ": truncated");
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i, pos += 4) data[i] = std::bit_cast<float>(detail::get_u32(p + pos));
    if (!ck.tensors.emplace(tname, Tensor<float>(std::move(shape), std::move(data))).second)
      throw FormatError(name + ": duplicate tensor " + tname);
  }
  need(8);
  for (int i = 0; i < 8; ++i) ck.step |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
  pos += 8;
  if (pos != bytes.size()) throw FormatError(name + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  return decode_checkpoint(detail::read_file(path), path.filename().string());
}

}  // namespace staa
