#pragma once

// Shape-changing linear ops: space-time pixel shuffle and its inverse,
// frame folding for rational temporal factors, and separable
// align-corners-false linear resizing.

#include <cmath>
#include <memory>
#include <vector>

#include "staa/autodiff.hpp"

namespace staa {

namespace detail {

// Gathers out[i] = in[index[i]] with the transposed scatter as backward.
template <typename T>
Var<T> gather(const char* name, Var<T> x, Shape out_shape,
              std::shared_ptr<const std::vector<std::size_t>> index) {
  Tensor<T> out(std::move(out_shape));
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xv[(*index)[i]];
  return x.tape->record(name, std::move(out), {x.id},
                        [x, index](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          auto* gx = tp.accum(x.id);
                          for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[(*index)[i]] += g[i];
                        });
}

inline std::shared_ptr<std::vector<std::size_t>> shuffle_index(std::size_t c, std::size_t n,
                                                                std::size_t h, std::size_t w,
                                                                std::size_t r, std::size_t s) {
  // Index of out[c', r*n+i, s*y+j, s*x+k] into x[((i*s+j)*s+k)*C + c', n, y, x].
  const std::size_t to = r * n, ho = s * h, wo = s * w;
  auto idx = std::make_shared<std::vector<std::size_t>>(c * to * ho * wo);
  std::size_t o = 0;
  for (std::size_t cc = 0; cc < c; ++cc)
    for (std::size_t t = 0; t < to; ++t)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x, ++o) {
          const std::size_t i = t % r, j = y % s, k = x % s;
          const std::size_t ch = ((i * s + j) * s + k) * c + cc;
          (*idx)[o] = ((ch * n + t / r) * h + y / s) * w + x / s;
        }
  return idx;
}

}  // namespace detail

// (r*s*s*C, N, H, W) -> (C, r*N, s*H, s*W).
template <typename T>
Var<T> space_time_shuffle(Var<T> x, std::size_t r, std::size_t s) {
  const auto& sh = x.shape();
  if (sh.size() != 4) throw DimensionError("space_time_shuffle input must be rank 4");
  if (r == 0 || s == 0) throw DimensionError("shuffle factors must be >= 1");
  const std::size_t block = r * s * s;
  if (sh[0] % block != 0)
    throw DimensionError("channel extent " + std::to_string(sh[0]) + " not divisible by r*s^2 = " +
                         std::to_string(block));
  const std::size_t c = sh[0] / block;
  auto idx = detail::shuffle_index(c, sh[1], sh[2], sh[3], r, s);
  return detail::gather<T>("space_time_shuffle", x, {c, r * sh[1], s * sh[2], s * sh[3]}, idx);
}

// Inverse of space_time_shuffle: (C, r*N, s*H, s*W) -> (r*s*s*C, N, H, W).
template <typename T>
Var<T> space_time_unshuffle(Var<T> x, std::size_t r, std::size_t s) {
  const auto& sh = x.shape();
  if (sh.size() != 4) throw DimensionError("space_time_unshuffle input must be rank 4");
  if (r == 0 || s == 0 || sh[1] % r || sh[2] % s || sh[3] % s)
    throw DimensionError("unshuffle extents " + shape_str(sh) + " not divisible by factors");
  const std::size_t c = sh[0], n = sh[1] / r, h = sh[2] / s, w = sh[3] / s;
  const auto fwd = detail::shuffle_index(c, n, h, w, r, s);
  auto inv = std::make_shared<std::vector<std::size_t>>(fwd->size());
  for (std::size_t i = 0; i < fwd->size(); ++i) (*inv)[(*fwd)[i]] = i;
  return detail::gather<T>("space_time_unshuffle", x, {r * s * s * c, n, h, w}, inv);
}

// Folds groups of q consecutive frames into channels:
// (C, q*G, H, W) -> (q*C, G, H, W) with channel j*C + c holding frame j.
template <typename T>
Var<T> fold_frames(Var<T> x, std::size_t q) {
  const auto& sh = x.shape();
  if (sh.size() != 4) throw DimensionError("fold_frames input must be rank 4");
  if (q == 0 || sh[1] % q)
    throw DimensionError("sequence length " + std::to_string(sh[1]) + " not divisible by " +
                         std::to_string(q));
  if (q == 1) return x;
  const std::size_t c = sh[0], g = sh[1] / q, hw = sh[2] * sh[3];
  auto idx = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::size_t o = 0;
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t cc = 0; cc < c; ++cc)
      for (std::size_t gg = 0; gg < g; ++gg)
        for (std::size_t p = 0; p < hw; ++p, ++o) (*idx)[o] = (cc * sh[1] + gg * q + j) * hw + p;
  return detail::gather<T>("fold_frames", x, {q * c, g, sh[2], sh[3]}, idx);
}

// Linear resize of one axis to `out_len` samples, align-corners-false:
// output i reads input coordinate (i + 0.5) * in/out - 0.5, clamped at 0.
template <typename T>
Var<T> linear_resize_axis(Var<T> x, std::size_t axis, std::size_t out_len) {
  const Shape& sh = x.shape();
  if (axis >= sh.size()) throw DimensionError("resize axis out of range");
  if (out_len == 0) throw DimensionError("resize to zero length");
  const std::size_t in_len = sh[axis];
  if (out_len == in_len) return x;
  std::size_t outer, inner;
  detail::axis_blocks(sh, axis, outer, inner);
  struct Tap {
    std::size_t i0, i1;
    T lambda;
  };
  auto taps = std::make_shared<std::vector<Tap>>(out_len);
  const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::max(src, 0.0);
    std::size_t i0 = std::min(static_cast<std::size_t>(std::floor(src)), in_len - 1);
    std::size_t i1 = std::min(i0 + 1, in_len - 1);
    (*taps)[o] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
  }
  Shape out_shape = sh;
  out_shape[axis] = out_len;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t o = 0; o < out_len; ++o) {
      const auto& tp = (*taps)[o];
      const T* r0 = xv.data().data() + (a * in_len + tp.i0) * inner;
      const T* r1 = xv.data().data() + (a * in_len + tp.i1) * inner;
      T* dst = out.data().data() + (a * out_len + o) * inner;
      for (std::size_t b = 0; b < inner; ++b) dst[b] = (T(1) - tp.lambda) * r0[b] + tp.lambda * r1[b];
    }
  return x.tape->record(
      "linear_resize_axis", std::move(out), {x.id},
      [x, taps, outer, inner, in_len, out_len](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        auto* gx = tp.accum(x.id);
        for (std::size_t a = 0; a < outer; ++a)
          for (std::size_t o = 0; o < out_len; ++o) {
            const auto& tap = (*taps)[o];
            const T* src = g.data().data() + (a * out_len + o) * inner;
            T* d0 = gx->data().data() + (a * in_len + tap.i0) * inner;
            T* d1 = gx->data().data() + (a * in_len + tap.i1) * inner;
            for (std::size_t b = 0; b < inner; ++b) {
              d0[b] += (T(1) - tap.lambda) * src[b];
              d1[b] += tap.lambda * src[b];
            }
          }
      });
}

// Separable linear upscaling of (C,T,H,W) by r_num/r_den in time and s in space.
template <typename T>
Var<T> trilinear_upscale(Var<T> x, std::size_t r_num, std::size_t r_den, std::size_t s) {
  const Shape& sh = x.shape();
  if (sh.size() != 4) throw DimensionError("trilinear_upscale input must be (C,T,H,W)");
  if (r_num == 0 || r_den == 0 || s == 0 || r_num < r_den)
    throw DimensionError("trilinear_upscale factors must be >= 1");
  if ((sh[1] * r_num) % r_den)
    throw DimensionError("sequence length " + std::to_string(sh[1]) + " times " +
                         std::to_string(r_num) + "/" + std::to_string(r_den) + " is not integral");
  auto y = linear_resize_axis(x, 1, sh[1] * r_num / r_den);
  y = linear_resize_axis(y, 2, sh[2] * s);
  return linear_resize_axis(y, 3, sh[3] * s);
}

// Evaluates a tape function on plain tensors without recording gradients.
template <typename T, typename F>
Tensor<T> eval_constant(const Tensor<T>& x, F&& f) {
  Tape<T> tape;
  return f(tape.constant(x)).value();
}

}  // namespace staa
