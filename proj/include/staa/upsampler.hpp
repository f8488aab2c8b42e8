#pragma once

// Space-time reconstruction network.
//
//   input conv -> bidirectional deformable temporal module -> residual dense
//   trunk -> output conv -> space-time pixel shuffle, plus a trilinear skip
//   of the low-resolution input.
//
// Per-frame features are (F,1,H,W) tensors so that the 2D convolutions of the
// temporal module reuse conv3d with a 1x3x3 kernel.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "staa/conv.hpp"
#include "staa/resample.hpp"
#include "staa/volume.hpp"

namespace staa {

template <typename T>
using ParamSet = std::map<std::string, Tensor<T>>;
using ModelParams = ParamSet<float>;

template <typename T>
using ParamVars = std::map<std::string, Var<T>>;

struct UpscaleConfig {
  Rational r{2, 1};
  std::size_t s = 2;
  std::size_t channels = 3;
  std::size_t features = 16;
  std::size_t rdb_blocks = 2;
  std::size_t rdb_layers = 3;
  std::size_t growth = 8;
  float beta = 0.2f;
  bool use_dtm = true;
  float leaky_slope = 0.1f;

  void validate() const {
    if (s == 0) throw SpecError("spatial factor must be >= 1");
    if (r.value() < 1.0) throw SpecError("temporal factor must be >= 1");
    if (channels != 1 && channels != 3) throw SpecError("channels must be 1 or 3");
    if (features == 0 || growth == 0 || rdb_layers == 0) throw SpecError("network widths must be >= 1");
    if (!(beta > 0.0f && beta <= 1.0f)) throw SpecError("residual scale must lie in (0, 1]");
  }

  std::size_t shuffle_channels() const { return static_cast<std::size_t>(r.num) * s * s * channels; }
};

namespace detail {

template <typename Rng>
Tensor<float> init_normal(Shape shape, std::size_t fan_in, float gain, Rng& rng) {
  const float std = gain / std::sqrt(static_cast<float>(fan_in));
  return Tensor<float>::normal(std::move(shape), std, rng);
}

}  // namespace detail

// Fresh parameters. The output conv starts at zero so the untrained network
// reproduces the trilinear skip exactly; offsets start at zero and the
// deformable kernel at identity.
inline ModelParams init_params(const UpscaleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t f = cfg.features, c = cfg.channels;
  ModelParams p;
  p["in.w"] = detail::init_normal({f, c, 3, 3, 3}, c * 27, 1.0f, rng);
  p["in.b"] = Tensor<float>::zeros({f});
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string pre = std::string("dtm.") + dir + ".";
    p[pre + "off.w"] = Tensor<float>::zeros({18, 2 * f, 1, 3, 3});
    p[pre + "off.b"] = Tensor<float>::zeros({18});
    auto dcn = detail::init_normal({f, f, 3, 3}, f * 9, 0.1f, rng);
    for (std::size_t i = 0; i < f; ++i) dcn.at(i, i, 1, 1) += 1.0f;
    p[pre + "dcn.w"] = std::move(dcn);
    p[pre + "dcn.b"] = Tensor<float>::zeros({f});
    p[pre + "lstm.w"] = detail::init_normal({4 * f, 3 * f, 1, 3, 3}, 3 * f * 9, 1.0f, rng);
    auto lb = Tensor<float>::zeros({4 * f});
    for (std::size_t i = f; i < 2 * f; ++i) lb[i] = 1.0f;  // forget gate
    p[pre + "lstm.b"] = std::move(lb);
  }
  auto half_identity = Tensor<float>::zeros({f, f, 1, 1, 1});
  for (std::size_t i = 0; i < f; ++i) half_identity.at(i, i, 0, 0, 0) = 0.5f;
  p["dtm.wf"] = half_identity;
  p["dtm.wb"] = half_identity;
  for (std::size_t b = 0; b < cfg.rdb_blocks; ++b) {
    const std::string pre = "rdb." + std::to_string(b) + ".";
    for (std::size_t l = 0; l < cfg.rdb_layers; ++l) {
      const std::size_t in = f + l * cfg.growth;
      p[pre + "conv" + std::to_string(l) + ".w"] =
          detail::init_normal({cfg.growth, in, 3, 3, 3}, in * 27, 0.5f, rng);
      p[pre + "conv" + std::to_string(l) + ".b"] = Tensor<float>::zeros({cfg.growth});
    }
    const std::size_t in = f + cfg.rdb_layers * cfg.growth;
    p[pre + "fuse.w"] = detail::init_normal({f, in, 1, 1, 1}, in, 0.5f, rng);
    p[pre + "fuse.b"] = Tensor<float>::zeros({f});
  }
  p["rdb.beta"] = Tensor<float>::scalar(cfg.beta);
  p["out.w"] = Tensor<float>::zeros({cfg.shuffle_channels(), cfg.r.den * f, 3, 3, 3});
  p["out.b"] = Tensor<float>::zeros({cfg.shuffle_channels()});
  return p;
}

// Names of parameters the optimizer updates (the residual scale is fixed).
inline bool is_trainable(const std::string& name) { return name != "rdb.beta"; }

template <typename T, typename U>
ParamVars<T> bind_params(Tape<T>& tape, const ParamSet<U>& params, bool trainable = true) {
  ParamVars<T> vars;
  for (const auto& [name, tensor] : params) {
    if constexpr (std::is_same_v<T, U>)
      vars.emplace(name, tape.leaf(tensor, trainable && is_trainable(name)));
    else
      vars.emplace(name, tape.leaf(tensor.template cast<T>(), trainable && is_trainable(name)));
  }
  return vars;
}

namespace detail {

template <typename T>
const Var<T>& param(const ParamVars<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw SpecError("missing model parameter '" + name + "'");
  return it->second;
}

template <typename T>
Var<T> conv_bias(Var<T> x, const ParamVars<T>& p, const std::string& pre, Stride3 st = {}) {
  return add_channel_bias(conv3d(x, param(p, pre + ".w"), st), param(p, pre + ".b"));
}

template <typename T>
std::vector<Var<T>> split_frames(Var<T> x) {
  std::vector<Var<T>> frames;
  for (std::size_t t = 0; t < x.shape()[1]; ++t) frames.push_back(slice(x, 1, t, 1));
  return frames;
}

}  // namespace detail

enum class Direction { Forward, Backward };

// Deformable alignment of the previous refined feature to the current one:
// offsets come from a conv over [prev, current], then prev is resampled by a
// deformable conv at the displaced taps.
template <typename T>
Var<T> deformable_align(Var<T> prev, Var<T> current, const ParamVars<T>& p, const std::string& pre) {
  auto offsets = detail::conv_bias(concat<T>({prev, current}, 0), p, pre + "off");
  auto aligned = deform_conv2d(prev, offsets, detail::param(p, pre + "dcn.w"));
  return add_channel_bias(aligned, detail::param(p, pre + "dcn.b"));
}

// One recurrent sweep. Frames are (F,1,H,W); `prefix` selects the parameter
// group ("dtm.fwd." or "dtm.bwd."). The backward direction walks the
// sequence from the last frame to the first.
template <typename T>
std::vector<Var<T>> dtm_pass(const std::vector<Var<T>>& frames, Direction dir, const ParamVars<T>& p,
                             const std::string& prefix) {
  if (frames.empty()) throw EmptyInputError("dtm_pass on an empty sequence");
  Tape<T>& tape = *frames[0].tape;
  const Shape fs = frames[0].shape();
  const std::size_t f = fs[0];
  const std::size_t n = frames.size();
  std::vector<Var<T>> out(n);
  Var<T> h = tape.constant(Tensor<T>(fs));
  Var<T> cell = tape.constant(Tensor<T>(fs));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = dir == Direction::Forward ? k : n - 1 - k;
    const auto& cur = frames[i];
    if (cur.shape() != fs) throw DimensionError("dtm_pass frame shapes differ");
    auto aligned = deformable_align(h, cur, p, prefix);
    auto gates = detail::conv_bias(concat<T>({cur, aligned, h}, 0), p, prefix + "lstm");
    auto in_gate = sigmoid(slice(gates, 0, 0, f));
    auto forget = sigmoid(slice(gates, 0, f, f));
    auto out_gate = sigmoid(slice(gates, 0, 2 * f, f));
    auto cand = tanh(slice(gates, 0, 3 * f, f));
    cell = add(mul(forget, cell), mul(in_gate, cand));
    h = mul(out_gate, tanh(cell));
    out[i] = h;
  }
  return out;
}

// DTM(f_i) = w_f * r_f(f_i) + w_b * r_b(f_i) with 1x1 blend convolutions.
// x is (F,N,H,W).
template <typename T>
Var<T> dtm_bidirectional(Var<T> x, const ParamVars<T>& p) {
  const auto frames = detail::split_frames(x);
  const auto fwd = dtm_pass(frames, Direction::Forward, p, "dtm.fwd.");
  const auto bwd = dtm_pass(frames, Direction::Backward, p, "dtm.bwd.");
  std::vector<Var<T>> blended;
  for (std::size_t i = 0; i < frames.size(); ++i)
    blended.push_back(add(conv3d(fwd[i], detail::param(p, "dtm.wf")),
                          conv3d(bwd[i], detail::param(p, "dtm.wb"))));
  return frames.size() == 1 ? blended[0] : concat(blended, 1);
}

// Residual dense block: densely concatenated 3x3x3 convs with leaky ReLU,
// 1x1x1 fusion, then x + beta * fusion.
template <typename T>
Var<T> residual_dense_block(Var<T> x, const ParamVars<T>& p, const std::string& pre, std::size_t layers,
                            T beta, T slope) {
  std::vector<Var<T>> feats{x};
  for (std::size_t l = 0; l < layers; ++l) {
    auto in = feats.size() == 1 ? feats[0] : concat(feats, 0);
    feats.push_back(leaky_relu(detail::conv_bias(in, p, pre + "conv" + std::to_string(l)), slope));
  }
  auto fused = detail::conv_bias(concat(feats, 0), p, pre + "fuse");
  return add(x, scale(fused, beta));
}

template <typename T>
Var<T> rdb_trunk(Var<T> x, const ParamVars<T>& p, const UpscaleConfig& cfg) {
  const T beta = detail::param(p, "rdb.beta").value()[0];
  for (std::size_t b = 0; b < cfg.rdb_blocks; ++b)
    x = residual_dense_block(x, p, "rdb." + std::to_string(b) + ".", cfg.rdb_layers, beta,
                             static_cast<T>(cfg.leaky_slope));
  return x;
}

// U(V) = trilinear(V) + F(V) on a (C,N,H,W) volume in [0,255] units. For a
// rational temporal factor p/q every q input frames form one shuffle block
// producing p output frames.
template <typename T>
Var<T> upscale(Var<T> v, const ParamVars<T>& p, const UpscaleConfig& cfg, T value_scale = T(255)) {
  cfg.validate();
  const auto& vs = v.shape();
  if (vs.size() != 4 || vs[0] != cfg.channels)
    throw DimensionError("upscale input " + shape_str(vs) + " does not match configured channels");
  const std::size_t q = cfg.r.den, rp = cfg.r.num;
  if (vs[1] % q)
    throw DimensionError("sequence length " + std::to_string(vs[1]) + " is not divisible by " +
                         std::to_string(q) + " for ratio " + cfg.r.str());
  const auto& ow = detail::param(p, "out.w").shape();
  if (ow.size() != 5 || ow[0] != cfg.shuffle_channels() || ow[1] != q * cfg.features)
    throw DimensionError("output conv " + shape_str(ow) + " does not match factors r=" + cfg.r.str() +
                         " s=" + std::to_string(cfg.s));
  const T slope = static_cast<T>(cfg.leaky_slope);
  auto feat = leaky_relu(detail::conv_bias(scale(v, T(1) / value_scale), p, "in"), slope);
  if (cfg.use_dtm) feat = dtm_bidirectional(feat, p);
  feat = rdb_trunk(feat, p, cfg);
  auto residual = space_time_shuffle(detail::conv_bias(fold_frames(feat, q), p, "out"), rp, cfg.s);
  auto skip = trilinear_upscale(v, rp, q, cfg.s);
  return add(skip, scale(residual, value_scale));
}

inline VideoVolume upscale(const VideoVolume& v, const ModelParams& params, const UpscaleConfig& cfg) {
  Tape<float> tape;
  const auto vars = bind_params(tape, params, false);
  auto out = upscale(tape.constant(v.data), vars, cfg);
  return VideoVolume(out.value(), v.fps * cfg.r, v.range);
}

inline Tensor<double> trilinear_upscale(const Tensor<double>& v, Rational r, std::size_t s) {
  return eval_constant(v, [&](Var<double> x) { return trilinear_upscale(x, r.num, r.den, s); });
}

inline VideoVolume trilinear_upscale(const VideoVolume& v, Rational r, std::size_t s) {
  auto out = eval_constant(v.data, [&](Var<float> x) { return trilinear_upscale(x, r.num, r.den, s); });
  return VideoVolume(std::move(out), v.fps * r, v.range);
}

}  // namespace staa
