#pragma once

// Classical resampling filters used as comparison points.

#include <cmath>
#include <string>
#include <vector>

#include "staa/downsampler.hpp"
#include "staa/volume.hpp"

namespace staa {

enum class ClassicalKind { Nearest, Bicubic, Gaussian3d, BoxTemporal };

struct ClassicalFilter {
  ClassicalKind kind = ClassicalKind::Nearest;
  double bicubic_a = -0.5;
  double sigma_t = 0.8;
  double sigma_s = 0.8;
  std::size_t extent = 3;
  std::size_t box_length = 2;

  static ClassicalFilter nearest() { return {}; }
  static ClassicalFilter bicubic(double a = -0.5) {
    ClassicalFilter f;
    f.kind = ClassicalKind::Bicubic;
    f.bicubic_a = a;
    return f;
  }
  static ClassicalFilter gaussian(double sigma_t = 0.8, double sigma_s = 0.8, std::size_t extent = 3) {
    ClassicalFilter f;
    f.kind = ClassicalKind::Gaussian3d;
    f.sigma_t = sigma_t;
    f.sigma_s = sigma_s;
    f.extent = extent;
    return f;
  }
  static ClassicalFilter box(std::size_t length) {
    ClassicalFilter f;
    f.kind = ClassicalKind::BoxTemporal;
    f.box_length = length;
    return f;
  }

  std::string name() const {
    switch (kind) {
      case ClassicalKind::Nearest: return "nearest";
      case ClassicalKind::Bicubic: return "bicubic";
      case ClassicalKind::Gaussian3d: return "gaussian";
      case ClassicalKind::BoxTemporal: return "box";
    }
    return "?";
  }
};

// Sampled, normalized 1D Gaussian of odd length.
inline std::vector<double> gaussian_kernel(double sigma, std::size_t extent) {
  if (!(sigma > 0.0)) throw RangeError("gaussian sigma must be > 0");
  if (extent % 2 == 0) throw DimensionError("gaussian extent must be odd");
  std::vector<double> k(extent);
  const double mid = static_cast<double>(extent / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < extent; ++i) {
    const double d = static_cast<double>(i) - mid;
    total += (k[i] = std::exp(-0.5 * d * d / (sigma * sigma)));
  }
  for (auto& v : k) v /= total;
  return k;
}

// Outer product of temporal and spatial Gaussians, (extent,extent,extent).
inline Tensor<double> gaussian_kernel3d(double sigma_t, double sigma_s, std::size_t extent) {
  const auto kt = gaussian_kernel(sigma_t, extent);
  const auto ks = gaussian_kernel(sigma_s, extent);
  Tensor<double> k({extent, extent, extent});
  for (std::size_t i = 0; i < extent; ++i)
    for (std::size_t j = 0; j < extent; ++j)
      for (std::size_t l = 0; l < extent; ++l) k.at(i, j, l) = kt[i] * ks[j] * ks[l];
  return k;
}

// Keys cubic convolution kernel.
inline double keys_cubic(double x, double a = -0.5) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct ResampleTaps {
  std::vector<std::size_t> start;  // per output, first index into idx/weight
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Antialiased cubic decimation weights for one axis: output i is centred at
// input coordinate (i + 0.5) * s - 0.5 with the kernel stretched by s.
inline ResampleTaps cubic_taps(std::size_t in, std::size_t out, std::size_t s, double a) {
  ResampleTaps taps;
  const double scale = static_cast<double>(s);
  const double support = 2.0 * scale;
  for (std::size_t o = 0; o < out; ++o) {
    taps.start.push_back(taps.index.size());
    const double centre = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const long lo = static_cast<long>(std::floor(centre - support)) + 1;
    const long hi = static_cast<long>(std::ceil(centre + support)) - 1;
    double total = 0.0;
    const std::size_t first = taps.weight.size();
    for (long x = lo; x <= hi; ++x) {
      const double w = keys_cubic((static_cast<double>(x) - centre) / scale, a);
      if (w == 0.0) continue;
      taps.index.push_back(static_cast<std::size_t>(std::clamp<long>(x, 0, static_cast<long>(in) - 1)));
      taps.weight.push_back(w);
      total += w;
    }
    for (std::size_t i = first; i < taps.weight.size(); ++i) taps.weight[i] /= total;
  }
  taps.start.push_back(taps.index.size());
  return taps;
}

}  // namespace detail

// Downsamples by r in time and s in space with the chosen classical filter.
// Output extents are ceil(T/r), ceil(H/s), ceil(W/s); temporal sample t'
// sits at input frame r*t'.
inline VideoVolume classical_downsample(const VideoVolume& v, const ClassicalFilter& f, std::size_t r,
                                        std::size_t s) {
  if (r == 0 || s == 0) throw DimensionError("strides must be >= 1");
  const std::size_t c = v.channels(), t = v.frames(), h = v.height(), w = v.width();
  const std::size_t to = (t + r - 1) / r, ho = (h + s - 1) / s, wo = (w + s - 1) / s;
  const Rational fps = v.fps / Rational(static_cast<std::uint32_t>(r), 1);
  Tensor<float> out({c, to, ho, wo});
  switch (f.kind) {
    case ClassicalKind::Nearest: {
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t a = 0; a < to; ++a)
          for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t x = 0; x < wo; ++x) out.at(ch, a, y, x) = v.data.at(ch, a * r, y * s, x * s);
      break;
    }
    case ClassicalKind::Bicubic: {
      const auto ty = detail::cubic_taps(h, ho, s, f.bicubic_a);
      const auto tx = detail::cubic_taps(w, wo, s, f.bicubic_a);
      std::vector<double> rows(ho * w);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t a = 0; a < to; ++a) {
          for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t x = 0; x < w; ++x) {
              double acc = 0.0;
              for (std::size_t k = ty.start[y]; k < ty.start[y + 1]; ++k)
                acc += ty.weight[k] * v.data.at(ch, a * r, ty.index[k], x);
              rows[y * w + x] = acc;
            }
          for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t x = 0; x < wo; ++x) {
              double acc = 0.0;
              for (std::size_t k = tx.start[x]; k < tx.start[x + 1]; ++k) acc += tx.weight[k] * rows[y * w + tx.index[k]];
              out.at(ch, a, y, x) = static_cast<float>(acc);
            }
        }
      break;
    }
    case ClassicalKind::Gaussian3d: {
      FilterBank fb;
      fb.raw_weights = gaussian_kernel3d(f.sigma_t, f.sigma_s, f.extent).cast<float>();
      fb.constraint = Constraint::None;
      fb.stride_t = r;
      fb.stride_s = s;
      return downsample(v, fb);
    }
    case ClassicalKind::BoxTemporal: {
      if (f.box_length == 0) throw DimensionError("box length must be >= 1");
      const long back = static_cast<long>((f.box_length - 1) / 2);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t a = 0; a < to; ++a)
          for (std::size_t y = 0; y < ho; ++y)
            for (std::size_t x = 0; x < wo; ++x) {
              double acc = 0.0;
              for (std::size_t k = 0; k < f.box_length; ++k) {
                const long tt = std::clamp<long>(static_cast<long>(a * r + k) - back, 0, static_cast<long>(t) - 1);
                acc += v.data.at(ch, static_cast<std::size_t>(tt), y * s, x * s);
              }
              out.at(ch, a, y, x) = static_cast<float>(acc / static_cast<double>(f.box_length));
            }
      break;
    }
  }
  return VideoVolume(std::move(out), fps, v.range);
}

// Parses "nearest", "bicubic", "gaussian" / "gaussian:SIGMA", "box" / "box:LEN".
inline ClassicalFilter parse_classical(const std::string& text, std::size_t default_box = 2) {
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  try {
    if (kind == "nearest" && arg.empty()) return ClassicalFilter::nearest();
    if (kind == "bicubic" && arg.empty()) return ClassicalFilter::bicubic();
    if (kind == "gaussian") {
      if (arg.empty()) return ClassicalFilter::gaussian();
      const double sigma = std::stod(arg);
      return ClassicalFilter::gaussian(sigma, sigma);
    }
    if (kind == "box") {
      if (arg.empty()) return ClassicalFilter::box(default_box);
      const long len = std::stol(arg);
      if (len <= 0) throw SpecError("box length must be positive");
      return ClassicalFilter::box(static_cast<std::size_t>(len));
    }
  } catch (const std::logic_error&) {
  }
  throw SpecError("unknown filter '" + text + "'");
}

}  // namespace staa
