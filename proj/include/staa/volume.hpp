#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "staa/tensor.hpp"

namespace staa {

// Positive rational p/q kept in lowest terms.
struct Rational {
  std::uint32_t num = 1;
  std::uint32_t den = 1;

  constexpr Rational() = default;
  Rational(std::uint32_t p, std::uint32_t q) : num(p), den(q) {
    if (p == 0 || q == 0) throw SpecError("rational terms must be positive");
    const auto g = std::gcd(p, q);
    num = p / g;
    den = q / g;
  }

  bool is_integer() const noexcept { return den == 1; }
  double value() const noexcept { return static_cast<double>(num) / den; }
  Rational operator*(Rational o) const {
    std::uint64_t p = static_cast<std::uint64_t>(num) * o.num;
    std::uint64_t q = static_cast<std::uint64_t>(den) * o.den;
    const auto g = std::gcd(p, q);
    return {static_cast<std::uint32_t>(p / g), static_cast<std::uint32_t>(q / g)};
  }
  Rational operator/(Rational o) const { return *this * Rational(o.den, o.num); }
  bool operator==(const Rational&) const = default;

  std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  // Accepts "P/Q" or an integer.
  static Rational parse(const std::string& text) {
    const auto slash = text.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const long p = std::stol(text, &used);
        if (used != text.size() || p <= 0) throw SpecError("bad ratio '" + text + "'");
        return {static_cast<std::uint32_t>(p), 1};
      }
      const long p = std::stol(text.substr(0, slash), &used);
      if (used != slash) throw SpecError("bad ratio '" + text + "'");
      const std::string rest = text.substr(slash + 1);
      const long q = std::stol(rest, &used);
      if (used != rest.size() || p <= 0 || q <= 0) throw SpecError("bad ratio '" + text + "'");
      return {static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(q)};
    } catch (const std::logic_error&) {
      throw SpecError("bad ratio '" + text + "'");
    }
  }
};

struct ValueRange {
  float lo = 0.0f;
  float hi = 255.0f;
  bool operator==(const ValueRange&) const = default;
};

// A clip as an xyt volume with channels first: data is (C,T,H,W).
struct VideoVolume {
  Tensor<float> data;
  Rational fps{30, 1};
  ValueRange range{};

  VideoVolume() = default;
  VideoVolume(Tensor<float> d, Rational f = {30, 1}, ValueRange r = {})
      : data(std::move(d)), fps(f), range(r) {
    if (data.rank() != 4) throw DimensionError("video volume must be (C,T,H,W), got " + shape_str(data.shape()));
    if (data.extent(0) != 1 && data.extent(0) != 3)
      throw DimensionError("video volume must have 1 or 3 channels");
  }

  std::size_t channels() const { return data.extent(0); }
  std::size_t frames() const { return data.extent(1); }
  std::size_t height() const { return data.extent(2); }
  std::size_t width() const { return data.extent(3); }
};

enum class ProfileAxis { Row, Column };

// xt slice at fixed row (C,T,W) or yt slice at fixed column (C,T,H).
template <typename T>
Tensor<T> temporal_profile(const Tensor<T>& v, ProfileAxis axis, std::size_t index) {
  if (v.rank() != 4) throw DimensionError("temporal_profile needs (C,T,H,W)");
  const std::size_t c = v.extent(0), t = v.extent(1), h = v.extent(2), w = v.extent(3);
  if (axis == ProfileAxis::Row) {
    if (index >= h) throw RangeError("row " + std::to_string(index) + " outside height " + std::to_string(h));
    Tensor<T> out({c, t, w});
    for (std::size_t cc = 0; cc < c; ++cc)
      for (std::size_t tt = 0; tt < t; ++tt)
        for (std::size_t x = 0; x < w; ++x) out.at(cc, tt, x) = v.at(cc, tt, index, x);
    return out;
  }
  if (index >= w) throw RangeError("column " + std::to_string(index) + " outside width " + std::to_string(w));
  Tensor<T> out({c, t, h});
  for (std::size_t cc = 0; cc < c; ++cc)
    for (std::size_t tt = 0; tt < t; ++tt)
      for (std::size_t y = 0; y < h; ++y) out.at(cc, tt, y) = v.at(cc, tt, y, index);
  return out;
}

inline Tensor<float> temporal_profile(const VideoVolume& v, ProfileAxis axis, std::size_t index) {
  return temporal_profile(v.data, axis, index);
}

}  // namespace staa
