#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "staa/baselines.hpp"
#include "staa/volume.hpp"

namespace staa {

enum class ColorSpace { Rgb, Luma };

struct QualityScore {
  double psnr = 0.0;  // +inf when the inputs are identical
  double ssim = 0.0;
};

namespace detail {

inline void require_same(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("metric inputs differ in shape: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// BT.601 luma of a 3-channel volume; 1-channel volumes pass through.
inline Tensor<float> to_luma(const Tensor<float>& v) {
  if (v.extent(0) == 1) return v;
  const std::size_t n = v.numel() / 3;
  Tensor<float> y({1, v.extent(1), v.extent(2), v.extent(3)});
  for (std::size_t i = 0; i < n; ++i)
    y[i] = static_cast<float>(0.299 * v[i] + 0.587 * v[n + i] + 0.114 * v[2 * n + i]);
  return y;
}

inline Tensor<float> in_space(const Tensor<float>& v, ColorSpace space) {
  return space == ColorSpace::Luma ? to_luma(v) : v;
}

}  // namespace detail

inline double mse(const Tensor<float>& a, const Tensor<float>& b) {
  detail::require_same(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

// 10 log10(peak^2 / MSE) over all samples; +inf when MSE is zero.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 255.0,
                   ColorSpace space = ColorSpace::Rgb) {
  detail::require_same(a, b);
  const double e = mse(detail::in_space(a, space), detail::in_space(b, space));
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / e);
}

inline double psnr(const VideoVolume& a, const VideoVolume& b, double peak = 255.0,
                   ColorSpace space = ColorSpace::Rgb) {
  return psnr(a.data, b.data, peak, space);
}

namespace detail {

// Separable Gaussian filtering of an h x w plane, valid region only.
inline std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                        const std::vector<double>& k) {
  const std::size_t n = k.size(), ho = h - n + 1, wo = w - n + 1;
  std::vector<double> rows(h * wo), out(ho * wo);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * plane[y * w + x + i];
      rows[y * wo + x] = acc;
    }
  for (std::size_t y = 0; y < ho; ++y)
    for (std::size_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows[(y + i) * wo + x];
      out[y * wo + x] = acc;
    }
  return out;
}

}  // namespace detail

// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), computed per frame
// and channel over the valid window positions, then averaged.
inline double ssim(const Tensor<float>& a_in, const Tensor<float>& b_in, double peak = 255.0,
                   ColorSpace space = ColorSpace::Rgb) {
  detail::require_same(a_in, b_in);
  const auto a = detail::in_space(a_in, space);
  const auto b = detail::in_space(b_in, space);
  const std::size_t c = a.extent(0), t = a.extent(1), h = a.extent(2), w = a.extent(3);
  constexpr std::size_t window = 11;
  if (h < window || w < window) throw DimensionError("ssim needs frames of at least 11x11");
  const auto k = gaussian_kernel(1.5, window);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t hw = h * w;
  std::vector<double> pa(hw), pb(hw), paa(hw), pbb(hw), pab(hw);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t f = 0; f < t; ++f) {
      const std::size_t base = (ch * t + f) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        pa[i] = a[base + i];
        pb[i] = b[base + i];
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
      }
      const auto ma = detail::filter_valid(pa, h, w, k), mb = detail::filter_valid(pb, h, w, k);
      const auto saa = detail::filter_valid(paa, h, w, k), sbb = detail::filter_valid(pbb, h, w, k);
      const auto sab = detail::filter_valid(pab, h, w, k);
      double frame = 0.0;
      for (std::size_t i = 0; i < ma.size(); ++i) {
        const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i];
        const double cov = sab[i] - ma[i] * mb[i];
        frame += ((2.0 * ma[i] * mb[i] + c1) * (2.0 * cov + c2)) /
                 ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
      }
      total += frame / static_cast<double>(ma.size());
      ++count;
    }
  return total / static_cast<double>(count);
}

inline double ssim(const VideoVolume& a, const VideoVolume& b, double peak = 255.0,
                   ColorSpace space = ColorSpace::Rgb) {
  return ssim(a.data, b.data, peak, space);
}

inline QualityScore quality(const VideoVolume& a, const VideoVolume& b, ColorSpace space = ColorSpace::Rgb) {
  return {psnr(a, b, 255.0, space), ssim(a, b, 255.0, space)};
}

// Fraction of pixels kept when time is downsampled by r and space by s.
inline double pixel_percentage(double r, double s) {
  if (r < 1.0 || s < 1.0) throw RangeError("downsampling factors must be >= 1");
  return 1.0 / (r * s * s);
}

}  // namespace staa
