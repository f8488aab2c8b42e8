#pragma once

// Learned space-time anti-aliasing downsampler: a constrained 3D filter,
// strided sampling and an optional differentiable 8-bit quantizer.

#include <cmath>
#include <string>
#include <vector>

#include "staa/conv.hpp"
#include "staa/resample.hpp"
#include "staa/volume.hpp"

namespace staa {

enum class Constraint { None, Softmax, SoftmaxQuantize };

inline std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::None: return "none";
    case Constraint::Softmax: return "softmax";
    case Constraint::SoftmaxQuantize: return "softmax+quantize";
  }
  return "?";
}

inline Constraint parse_constraint(const std::string& s) {
  if (s == "none" || s == "no") return Constraint::None;
  if (s == "softmax" || s == "soft") return Constraint::Softmax;
  if (s == "softmax+quantize" || s == "quant") return Constraint::SoftmaxQuantize;
  throw SpecError("unknown filter constraint '" + s + "'");
}

struct FilterBank {
  // (kt,kh,kw) shared by all channels, or (C,kt,kh,kw) when per_channel.
  Tensor<float> raw_weights = Tensor<float>::zeros({3, 3, 3});
  Constraint constraint = Constraint::Softmax;
  std::size_t stride_t = 2;
  std::size_t stride_s = 2;
  ValueRange range{};

  bool per_channel() const { return raw_weights.rank() == 4; }

  static FilterBank zeros(std::size_t kt, std::size_t kh, std::size_t kw, Constraint c, std::size_t r,
                          std::size_t s) {
    FilterBank fb;
    fb.raw_weights = Tensor<float>::zeros({kt, kh, kw});
    fb.constraint = c;
    fb.stride_t = r;
    fb.stride_s = s;
    return fb;
  }

  // Unconstrained 1 at the centre tap: plain strided sampling.
  static FilterBank delta(std::size_t r, std::size_t s, std::size_t extent = 3) {
    auto fb = zeros(extent, extent, extent, Constraint::None, r, s);
    fb.raw_weights.at(extent / 2, extent / 2, extent / 2) = 1.0f;
    return fb;
  }
};

// round(clamp(x, lo, hi)) forward. Backward uses the piecewise clip
// surrogate (2 at or beyond either bound, 1 inside) times an identity
// gradient for rounding.
template <typename T>
Var<T> quantize_layer(Var<T> x, T lo = T(0), T hi = T(255)) {
  if (!(lo < hi)) throw RangeError("quantize range needs lo < hi");
  const auto& xv = x.value();
  detail::require_finite(xv, "quantize_layer");
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = std::round(std::clamp(xv[i], lo, hi));
  return x.tape->record("quantize", std::move(out), {x.id},
                        [x, lo, hi](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          const auto& xv = tp.value(x.id);
                          auto* gx = tp.accum(x.id);
                          for (std::size_t i = 0; i < g.numel(); ++i) {
                            const T d = (xv[i] <= lo || xv[i] >= hi) ? T(2) : T(1);
                            (*gx)[i] += g[i] * d;
                          }
                        });
}

// Applies the constraint to raw weights; per-channel banks are normalized
// channel by channel.
template <typename T>
Var<T> effective_kernel(Var<T> raw, Constraint constraint) {
  detail::require_finite(raw.value(), "effective_kernel");
  if (constraint == Constraint::None) return raw;
  if (raw.shape().size() == 3) return softmax_flat(raw);
  std::vector<Var<T>> parts;
  for (std::size_t c = 0; c < raw.shape()[0]; ++c) parts.push_back(softmax_flat(slice(raw, 0, c, 1)));
  return concat(parts, 0);
}

// Depthwise strided filtering of video (C,T,H,W) with the constrained kernel.
template <typename T>
Var<T> downsample(Var<T> video, Var<T> raw, Constraint constraint, std::size_t r, std::size_t s,
                  T lo = T(0), T hi = T(255)) {
  const auto& vs = video.shape();
  if (vs.size() != 4) throw DimensionError("downsample input must be (C,T,H,W)");
  const auto kernel = effective_kernel(raw, constraint);
  const auto& ks = kernel.shape();
  const std::size_t c = vs[0];
  const bool per_channel = ks.size() == 4;
  if (per_channel && ks[0] != c)
    throw DimensionError("per-channel filter has " + std::to_string(ks[0]) + " kernels for " +
                         std::to_string(c) + " channels");
  const Shape k5 = per_channel ? Shape{1, 1, ks[1], ks[2], ks[3]} : Shape{1, 1, ks[0], ks[1], ks[2]};
  const Stride3 st{r, s, s};
  std::vector<Var<T>> outs;
  Var<T> shared = per_channel ? kernel : reshape(kernel, k5);
  for (std::size_t ch = 0; ch < c; ++ch) {
    auto k = per_channel ? reshape(slice(kernel, 0, ch, 1), k5) : shared;
    auto plane = c == 1 ? video : slice(video, 0, ch, 1);
    outs.push_back(conv3d(plane, k, st));
  }
  auto out = c == 1 ? outs[0] : concat(outs, 0);
  if (constraint == Constraint::SoftmaxQuantize) out = quantize_layer(out, lo, hi);
  return out;
}

// Inference on a whole clip; fps is divided by the temporal stride.
inline VideoVolume downsample(const VideoVolume& v, const FilterBank& fb) {
  Tape<float> tape;
  auto out = downsample(tape.constant(v.data), tape.constant(fb.raw_weights), fb.constraint, fb.stride_t,
                        fb.stride_s, fb.range.lo, fb.range.hi);
  return VideoVolume(out.value(), v.fps / Rational(static_cast<std::uint32_t>(fb.stride_t), 1), v.range);
}

inline Tensor<float> effective_kernel(const FilterBank& fb) {
  Tape<float> tape;
  return effective_kernel(tape.constant(fb.raw_weights), fb.constraint).value();
}

}  // namespace staa
