#pragma once

// Convolution-family ops on the tape: strided 3D convolution with replicate
// padding, bilinear sampling and a 3x3-style deformable convolution. The
// inner products run through Eigen's single-threaded GEMM.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "staa/autodiff.hpp"

namespace staa {

struct Stride3 {
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// For each output position along one axis and each tap, the clamped input
// index (replicate padding).
inline std::vector<std::size_t> axis_taps(std::size_t in, std::size_t out, std::size_t stride,
                                          std::size_t k) {
  const long pad = static_cast<long>(k - 1) / 2;
  std::vector<std::size_t> idx(k * out);
  for (std::size_t tap = 0; tap < k; ++tap)
    for (std::size_t o = 0; o < out; ++o) {
      long p = static_cast<long>(stride * o + tap) - pad;
      p = std::clamp<long>(p, 0, static_cast<long>(in) - 1);
      idx[tap * out + o] = static_cast<std::size_t>(p);
    }
  return idx;
}

struct Conv3dGeometry {
  std::size_t ci, t, h, w;
  std::size_t co, kt, kh, kw;
  std::size_t to, ho, wo;
  std::vector<std::size_t> tt, th, tw;
  bool pointwise = false;

  std::size_t taps() const { return kt * kh * kw; }
  std::size_t rows() const { return ci * taps(); }
  std::size_t cols() const { return to * ho * wo; }

  template <typename F>
  void for_each(F&& f) const {
    // f(row, col, input offset)
    std::size_t row = 0;
    for (std::size_t c = 0; c < ci; ++c)
      for (std::size_t i = 0; i < kt; ++i)
        for (std::size_t j = 0; j < kh; ++j)
          for (std::size_t k = 0; k < kw; ++k, ++row) {
            std::size_t col = 0;
            for (std::size_t a = 0; a < to; ++a) {
              const std::size_t base_t = (c * t + tt[i * to + a]) * h;
              for (std::size_t b = 0; b < ho; ++b) {
                const std::size_t base_h = (base_t + th[j * ho + b]) * w;
                for (std::size_t d = 0; d < wo; ++d, ++col) f(row, col, base_h + tw[k * wo + d]);
              }
            }
          }
  }
};

template <typename T>
Conv3dGeometry conv3d_geometry(const Tensor<T>& x, const Tensor<T>& k, Stride3 st) {
  if (x.rank() != 4) throw DimensionError("conv3d input must be (C,T,H,W), got " + shape_str(x.shape()));
  if (k.rank() != 5)
    throw DimensionError("conv3d kernel must be (Co,Ci,kt,kh,kw), got " + shape_str(k.shape()));
  if (k.extent(1) != x.extent(0))
    throw DimensionError("conv3d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(k.shape()));
  if (st.t == 0 || st.h == 0 || st.w == 0) throw DimensionError("conv3d strides must be >= 1");
  for (std::size_t a = 2; a < 5; ++a)
    if (k.extent(a) % 2 == 0) throw DimensionError("conv3d kernel extents must be odd");
  Conv3dGeometry g;
  g.ci = x.extent(0);
  g.t = x.extent(1);
  g.h = x.extent(2);
  g.w = x.extent(3);
  g.co = k.extent(0);
  g.kt = k.extent(2);
  g.kh = k.extent(3);
  g.kw = k.extent(4);
  g.to = ceil_div(g.t, st.t);
  g.ho = ceil_div(g.h, st.h);
  g.wo = ceil_div(g.w, st.w);
  g.tt = axis_taps(g.t, g.to, st.t, g.kt);
  g.th = axis_taps(g.h, g.ho, st.h, g.kh);
  g.tw = axis_taps(g.w, g.wo, st.w, g.kw);
  g.pointwise = g.kt == 1 && g.kh == 1 && g.kw == 1 && st.t == 1 && st.h == 1 && st.w == 1;
  return g;
}

}  // namespace detail

// Cross-correlation out[o,t,y,x] = sum k[o,c,i,j,l] * pad(in)[c, r*t+i, s*y+j, s*x+l]
// with (k-1)/2 replicate padding per axis. Output extents are ceil(in/stride).
template <typename T>
Var<T> conv3d(Var<T> x, Var<T> kernel, Stride3 stride = {}) {
  using Mat = detail::RowMat<T>;
  const auto geo = std::make_shared<detail::Conv3dGeometry>(
      detail::conv3d_geometry(x.value(), kernel.value(), stride));
  const std::size_t rows = geo->rows(), cols = geo->cols();
  auto col = std::make_shared<std::vector<T>>();
  const T* col_ptr = x.value().data().data();
  if (!geo->pointwise) {
    col->resize(rows * cols);
    const auto xv = x.value().data();
    geo->for_each([&](std::size_t r, std::size_t c, std::size_t off) {
      (*col)[r * cols + c] = xv[off];
    });
    col_ptr = col->data();
  }
  Tensor<T> out({geo->co, geo->to, geo->ho, geo->wo});
  Eigen::Map<Mat> om(out.data().data(), geo->co, cols);
  Eigen::Map<const Mat> km(kernel.value().data().data(), geo->co, rows);
  Eigen::Map<const Mat> cm(col_ptr, rows, cols);
  om.noalias() = km * cm;
  return x.tape->record(
      "conv3d", std::move(out), {x.id, kernel.id},
      [x, kernel, geo, col](Tape<T>& tp, std::size_t self) {
        const std::size_t rows = geo->rows(), cols = geo->cols();
        Eigen::Map<const Mat> gm(tp.upstream(self).data().data(), geo->co, cols);
        const T* cp = geo->pointwise ? tp.value(x.id).data().data() : col->data();
        Eigen::Map<const Mat> cm(cp, rows, cols);
        if (auto* gk = tp.accum(kernel.id)) {
          Eigen::Map<Mat> gkm(gk->data().data(), geo->co, rows);
          gkm.noalias() += gm * cm.transpose();
        }
        if (auto* gx = tp.accum(x.id)) {
          Eigen::Map<const Mat> km(tp.value(kernel.id).data().data(), geo->co, rows);
          if (geo->pointwise) {
            Eigen::Map<Mat> gxm(gx->data().data(), rows, cols);
            gxm.noalias() += km.transpose() * gm;
          } else {
            Mat gcol = km.transpose() * gm;
            auto gxs = gx->data();
            geo->for_each([&](std::size_t r, std::size_t c, std::size_t off) {
              gxs[off] += gcol(r, c);
            });
          }
        }
      });
}

namespace detail {

// Four-neighbour bilinear lookup at (py, px) clamped to the grid.
template <typename T>
struct BilinearPoint {
  std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
  T ly = 0, lx = 0;
  bool clamped_y = false, clamped_x = false;

  BilinearPoint(T py, T px, std::size_t h, std::size_t w) {
    const T ymax = static_cast<T>(h - 1), xmax = static_cast<T>(w - 1);
    clamped_y = py < T(0) || py > ymax;
    clamped_x = px < T(0) || px > xmax;
    const T cy = std::clamp(py, T(0), ymax);
    const T cx = std::clamp(px, T(0), xmax);
    split(cy, h, y0, y1, ly);
    split(cx, w, x0, x1, lx);
  }

  static void split(T c, std::size_t n, std::size_t& i0, std::size_t& i1, T& frac) {
    if (n == 1) {
      i0 = i1 = 0;
      frac = 0;
      return;
    }
    i0 = std::min(static_cast<std::size_t>(std::floor(c)), n - 2);
    i1 = i0 + 1;
    frac = c - static_cast<T>(i0);
  }

  T sample(const T* plane, std::size_t w) const {
    const T f00 = plane[y0 * w + x0], f01 = plane[y0 * w + x1];
    const T f10 = plane[y1 * w + x0], f11 = plane[y1 * w + x1];
    return (T(1) - ly) * ((T(1) - lx) * f00 + lx * f01) + ly * ((T(1) - lx) * f10 + lx * f11);
  }

  // d sample / d py and d sample / d px; zero on clamped axes.
  void sample_grad(const T* plane, std::size_t w, T& dy, T& dx) const {
    const T f00 = plane[y0 * w + x0], f01 = plane[y0 * w + x1];
    const T f10 = plane[y1 * w + x0], f11 = plane[y1 * w + x1];
    dy = (clamped_y || y0 == y1) ? T(0) : (T(1) - lx) * (f10 - f00) + lx * (f11 - f01);
    dx = (clamped_x || x0 == x1) ? T(0) : (T(1) - ly) * (f01 - f00) + ly * (f11 - f10);
  }

  void scatter(T* plane, std::size_t w, T g) const {
    plane[y0 * w + x0] += g * (T(1) - ly) * (T(1) - lx);
    plane[y0 * w + x1] += g * (T(1) - ly) * lx;
    plane[y1 * w + x0] += g * ly * (T(1) - lx);
    plane[y1 * w + x1] += g * ly * lx;
  }
};

}  // namespace detail

// Samples every channel of feature (C,H,W) at (row, col) + offset, where the
// offset tensor holds (dx, dy). Differentiable in the feature and the offset.
template <typename T>
Var<T> bilinear_sample(Var<T> feature, std::size_t row, std::size_t col, Var<T> offset) {
  const auto& fv = feature.value();
  if (fv.rank() != 3) throw DimensionError("bilinear_sample feature must be (C,H,W)");
  if (offset.numel() != 2) throw DimensionError("bilinear_sample offset must hold (dx, dy)");
  const std::size_t c = fv.extent(0), h = fv.extent(1), w = fv.extent(2);
  if (row >= h || col >= w) throw DimensionError("bilinear_sample base outside feature");
  const auto& ov = offset.value();
  const detail::BilinearPoint<T> pt(static_cast<T>(row) + ov[1], static_cast<T>(col) + ov[0], h, w);
  Tensor<T> out({c});
  for (std::size_t ch = 0; ch < c; ++ch) out[ch] = pt.sample(fv.data().data() + ch * h * w, w);
  return feature.tape->record(
      "bilinear_sample", std::move(out), {feature.id, offset.id},
      [feature, offset, pt, c, h, w](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        if (auto* gf = tp.accum(feature.id))
          for (std::size_t ch = 0; ch < c; ++ch) pt.scatter(gf->data().data() + ch * h * w, w, g[ch]);
        if (auto* go = tp.accum(offset.id)) {
          const auto& fv = tp.value(feature.id);
          for (std::size_t ch = 0; ch < c; ++ch) {
            T dy, dx;
            pt.sample_grad(fv.data().data() + ch * h * w, w, dy, dx);
            (*go)[0] += g[ch] * dx;
            (*go)[1] += g[ch] * dy;
          }
        }
      });
}

// Deformable convolution over one frame. `x` is (C,H,W) or (C,1,H,W);
// `offsets` carries 2*kh*kw channels over (H,W), channel 2k = dx and
// 2k+1 = dy for tap k in row-major tap order; `weight` is (Co,C,kh,kw).
// Tap (a,b) of output pixel (y,x) samples x at
// (y + a - (kh-1)/2 + dy, x + b - (kw-1)/2 + dx), clamped to the frame.
template <typename T>
Var<T> deform_conv2d(Var<T> x, Var<T> offsets, Var<T> weight) {
  using Mat = detail::RowMat<T>;
  const auto& xs = x.shape();
  if (xs.size() != 3 && !(xs.size() == 4 && xs[1] == 1))
    throw DimensionError("deform_conv2d input must be (C,H,W) or (C,1,H,W), got " + shape_str(xs));
  const auto& ws = weight.shape();
  if (ws.size() != 4 || ws[1] != xs[0])
    throw DimensionError("deform_conv2d weight must be (Co,C,kh,kw), got " + shape_str(ws));
  const std::size_t c = xs[0], h = xs[xs.size() - 2], w = xs[xs.size() - 1];
  const std::size_t co = ws[0], kh = ws[2], kw = ws[3], taps = kh * kw;
  if (kh % 2 == 0 || kw % 2 == 0) throw DimensionError("deform_conv2d kernel extents must be odd");
  const std::size_t hw = h * w;
  if (offsets.numel() != 2 * taps * hw)
    throw DimensionError("deform_conv2d offsets must be (" + std::to_string(2 * taps) + ",H,W)");

  auto points = std::make_shared<std::vector<detail::BilinearPoint<T>>>();
  points->reserve(taps * hw);
  const auto& ov = offsets.value();
  const long ph = static_cast<long>(kh - 1) / 2, pw = static_cast<long>(kw - 1) / 2;
  for (std::size_t k = 0; k < taps; ++k) {
    const long dy0 = static_cast<long>(k / kw) - ph, dx0 = static_cast<long>(k % kw) - pw;
    for (std::size_t p = 0; p < hw; ++p) {
      const T py = static_cast<T>(static_cast<long>(p / w) + dy0) + ov[(2 * k + 1) * hw + p];
      const T px = static_cast<T>(static_cast<long>(p % w) + dx0) + ov[(2 * k) * hw + p];
      points->emplace_back(py, px, h, w);
    }
  }
  const std::size_t rows = c * taps;
  auto col = std::make_shared<Mat>(rows, hw);
  const T* xp = x.value().data().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < taps; ++k)
      for (std::size_t p = 0; p < hw; ++p)
        (*col)(ch * taps + k, p) = (*points)[k * hw + p].sample(xp + ch * hw, w);

  Shape out_shape = xs.size() == 4 ? Shape{co, 1, h, w} : Shape{co, h, w};
  Tensor<T> out(out_shape);
  Eigen::Map<Mat> om(out.data().data(), co, hw);
  Eigen::Map<const Mat> wm(weight.value().data().data(), co, rows);
  om.noalias() = wm * (*col);
  return x.tape->record(
      "deform_conv2d", std::move(out), {x.id, offsets.id, weight.id},
      [x, offsets, weight, points, col, c, w, hw, co, taps, rows](Tape<T>& tp, std::size_t self) {
        Eigen::Map<const Mat> gm(tp.upstream(self).data().data(), co, hw);
        if (auto* gw = tp.accum(weight.id)) {
          Eigen::Map<Mat> gwm(gw->data().data(), co, rows);
          gwm.noalias() += gm * col->transpose();
        }
        auto* gx = tp.accum(x.id);
        auto* go = tp.accum(offsets.id);
        if (!gx && !go) return;
        Eigen::Map<const Mat> wm(tp.value(weight.id).data().data(), co, rows);
        const Mat gcol = wm.transpose() * gm;
        const T* xp = tp.value(x.id).data().data();
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t k = 0; k < taps; ++k)
            for (std::size_t p = 0; p < hw; ++p) {
              const T g = gcol(ch * taps + k, p);
              const auto& pt = (*points)[k * hw + p];
              if (gx) pt.scatter(gx->data().data() + ch * hw, w, g);
              if (go) {
                T dy, dx;
                pt.sample_grad(xp + ch * hw, w, dy, dx);
                (*go)[(2 * k) * hw + p] += g * dx;
                (*go)[(2 * k + 1) * hw + p] += g * dy;
              }
            }
      });
}

}  // namespace staa
