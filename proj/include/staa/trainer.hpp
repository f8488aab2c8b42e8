#pragma once

// Joint optimization of the downsampling filter and the upsampler with an
// L1 reconstruction loss, Adam and a step-decay learning-rate schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "staa/baselines.hpp"
#include "staa/checkpoint.hpp"
#include "staa/downsampler.hpp"
#include "staa/metrics.hpp"
#include "staa/upsampler.hpp"

namespace staa {

enum class DownsamplerMode { Learned, FixedClassical };

// A complete encoder/decoder pair.
struct Model {
  DownsamplerMode mode = DownsamplerMode::Learned;
  FilterBank filter{};
  ClassicalFilter fixed{};
  UpscaleConfig config{};
  ModelParams params{};


  static Model create(const UpscaleConfig& cfg, Constraint constraint, std::uint64_t seed) {
    if (!cfg.r.is_integer() && constraint != Constraint::None)
      throw SpecError("learned downsampling needs an integer temporal factor");
    Model m;
    m.config = cfg;
    m.filter = FilterBank::zeros(3, 3, 3, constraint, cfg.r.num / cfg.r.den, cfg.s);
    m.params = init_params(cfg, seed);
    return m;
  }

  static Model create_fixed(const UpscaleConfig& cfg, const ClassicalFilter& f, std::uint64_t seed) {
    Model m;
    m.mode = DownsamplerMode::FixedClassical;
    m.config = cfg;
    m.fixed = f;
    m.filter.stride_t = cfg.r.is_integer() ? cfg.r.num : 1;
    m.filter.stride_s = cfg.s;
    m.params = init_params(cfg, seed);
    return m;
  }

  // Fixed filters with a non-integer factor p/q filter spatially, then
  // resample time linearly from T to T*q/p frames.
  VideoVolume encode(const VideoVolume& v) const {
    if (mode == DownsamplerMode::Learned) return downsample(v, filter);
    if (config.r.is_integer()) return classical_downsample(v, fixed, filter.stride_t, filter.stride_s);
    if (v.frames() % config.r.num != 0)
      throw DimensionError("frame count " + std::to_string(v.frames()) + " is not divisible by " +
                           std::to_string(config.r.num));
    auto d = classical_downsample(v, fixed, 1, filter.stride_s);
    const std::size_t out_t = v.frames() / config.r.num * config.r.den;
    auto t = eval_constant(d.data, [&](Var<float> x) { return linear_resize_axis(x, 1, out_t); });
    return VideoVolume(std::move(t), v.fps / config.r, v.range);
  }

  VideoVolume decode(const VideoVolume& v) const { return upscale(v, params, config); }
};

inline Checkpoint to_checkpoint(const Model& m, std::uint64_t step) {
  Checkpoint ck;
  ck.step = step;
  auto put = [&](const std::string& k, double v) { ck.tensors[k] = Tensor<float>::scalar(static_cast<float>(v)); };
  const auto& c = m.config;
  put("cfg.rt_num", c.r.num);
  put("cfg.rt_den", c.r.den);
  put("cfg.rs", static_cast<double>(c.s));
  put("cfg.channels", static_cast<double>(c.channels));
  put("cfg.features", static_cast<double>(c.features));
  put("cfg.rdb_blocks", static_cast<double>(c.rdb_blocks));
  put("cfg.rdb_layers", static_cast<double>(c.rdb_layers));
  put("cfg.growth", static_cast<double>(c.growth));
  put("cfg.use_dtm", c.use_dtm ? 1.0 : 0.0);
  put("cfg.leaky_slope", c.leaky_slope);
  put("cfg.ds.mode", m.mode == DownsamplerMode::Learned ? 0.0 : 1.0);
  put("cfg.ds.constraint", static_cast<double>(m.filter.constraint));
  put("cfg.ds.classical", static_cast<double>(m.fixed.kind));
  put("cfg.ds.sigma_t", m.fixed.sigma_t);
  put("cfg.ds.sigma_s", m.fixed.sigma_s);
  put("cfg.ds.extent", static_cast<double>(m.fixed.extent));
  put("cfg.ds.box", static_cast<double>(m.fixed.box_length));
  ck.tensors["ds.raw"] = m.filter.raw_weights;
  for (const auto& [name, t] : m.params) ck.tensors["up." + name] = t;
  return ck;
}

inline Model from_checkpoint(const Checkpoint& ck) {
  auto get = [&](const std::string& k) -> double {
    auto it = ck.tensors.find(k);
    if (it == ck.tensors.end() || it->second.numel() != 1) throw FormatError("checkpoint lacks '" + k + "'");
    return it->second[0];
  };
  auto count = [&](const std::string& k) { return static_cast<std::size_t>(get(k)); };
  Model m;
  auto& c = m.config;
  c.r = Rational(static_cast<std::uint32_t>(get("cfg.rt_num")), static_cast<std::uint32_t>(get("cfg.rt_den")));
  c.s = count("cfg.rs");
  c.channels = count("cfg.channels");
  c.features = count("cfg.features");
  c.rdb_blocks = count("cfg.rdb_blocks");
  c.rdb_layers = count("cfg.rdb_layers");
  c.growth = count("cfg.growth");
  c.use_dtm = get("cfg.use_dtm") != 0.0;
  c.leaky_slope = static_cast<float>(get("cfg.leaky_slope"));
  m.mode = get("cfg.ds.mode") == 0.0 ? DownsamplerMode::Learned : DownsamplerMode::FixedClassical;
  const auto cons = count("cfg.ds.constraint");
  if (cons > 2) throw FormatError("checkpoint has an unknown filter constraint");
  m.filter.constraint = static_cast<Constraint>(cons);
  const auto kind = count("cfg.ds.classical");
  if (kind > 3) throw FormatError("checkpoint has an unknown classical filter");
  m.fixed.kind = static_cast<ClassicalKind>(kind);
  m.fixed.sigma_t = get("cfg.ds.sigma_t");
  m.fixed.sigma_s = get("cfg.ds.sigma_s");
  m.fixed.extent = count("cfg.ds.extent");
  m.fixed.box_length = count("cfg.ds.box");
  auto raw = ck.tensors.find("ds.raw");
  if (raw == ck.tensors.end()) throw FormatError("checkpoint lacks 'ds.raw'");
  m.filter.raw_weights = raw->second;
  m.filter.stride_t = c.r.is_integer() ? c.r.num : 1;
  m.filter.stride_s = c.s;
  for (const auto& [name, t] : ck.tensors)
    if (name.rfind("up.", 0) == 0) m.params[name.substr(3)] = t;
  auto beta = m.params.find("rdb.beta");
  if (beta == m.params.end()) throw FormatError("checkpoint lacks the residual scale");
  c.beta = beta->second[0];
  c.validate();
  return m;
}

struct TrainConfig {
  double lr0 = 2e-4;
  double decay = 0.2;
  std::vector<double> milestones{0.5, 0.8};  // fractions of total steps
  std::size_t batch = 1;
  std::size_t steps = 2000;
  std::size_t patch_t = 4, patch_h = 32, patch_w = 32;
  std::uint64_t seed = 0;
  bool hflip = true;
  bool rot90 = true;
  std::size_t log_every = 10;
  std::size_t val_every = 0;  // 0: validate only after the last step
  std::size_t val_count = 8;  // trailing clips held out for validation
  std::size_t threads = 0;    // validation workers; 0 = single-threaded

  void validate() const {
    if (!(lr0 > 0.0)) throw SpecError("lr0 must be > 0");
    if (!(decay > 0.0)) throw SpecError("decay must be > 0");
    double last = 0.0;
    for (double m : milestones) {
      if (!(m > last && m < 1.0)) throw SpecError("milestones must be strictly increasing in (0,1)");
      last = m;
    }
    if (batch == 0 || steps == 0 || log_every == 0) throw SpecError("batch, steps and log interval must be >= 1");
    if (patch_t == 0 || patch_h == 0 || patch_w == 0) throw SpecError("patch extents must be >= 1");
  }
};

// lr0 * decay^(milestones passed).
inline double lr_at(std::size_t step, const TrainConfig& cfg) {
  double lr = cfg.lr0;
  for (double m : cfg.milestones)
    if (static_cast<double>(step) >= m * static_cast<double>(cfg.steps)) lr *= cfg.decay;
  return lr;
}

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  std::map<std::string, std::vector<double>> m, v;
};

// Bias-corrected Adam update of every tensor that has a gradient.
inline void adam_step(std::map<std::string, Tensor<float>*>& params, const std::map<std::string, Tensor<float>>& grads,
                      AdamState& st, double lr) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw SpecError("gradient for unknown parameter '" + name + "'");
    if (it->second->shape() != g.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    for (float x : g.data())
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in parameter '" + name + "'");
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (const auto& [name, g] : grads) {
    Tensor<float>& p = *params.at(name);
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) {
      m.assign(g.numel(), 0.0);
      v.assign(g.numel(), 0.0);
    }
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double gi = g[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * gi;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * gi * gi;
      const double mhat = m[i] / bc1, vhat = v[i] / bc2;
      p[i] = static_cast<float>(p[i] - lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

struct LossRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_l1 = 0.0;
  double val_psnr = std::numeric_limits<double>::quiet_NaN();
};

inline void write_loss_csv(const std::vector<LossRow>& rows, std::ostream& out) {
  out << "step,lr,train_l1,val_psnr\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.lr << ',' << r.train_l1 << ',';
    if (!std::isnan(r.val_psnr)) out << r.val_psnr;
    out << '\n';
  }
}

struct TrainResult {
  Model model;
  Checkpoint checkpoint;
  std::vector<LossRow> curve;
  double val_psnr = std::numeric_limits<double>::quiet_NaN();
};

// Raised when the loss turns non-finite; carries the last good state.
class TrainingAborted : public NumericError {
public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : NumericError(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

private:
  Checkpoint last_good_;
};

namespace detail {

// Random (C, pt, ph, pw) crop with optional horizontal flip and 90 degree rotation.
template <typename Rng>
Tensor<float> sample_patch(const VideoVolume& v, const TrainConfig& cfg, Rng& rng) {
  const std::size_t c = v.channels();
  if (v.frames() < cfg.patch_t || v.height() < cfg.patch_h || v.width() < cfg.patch_w)
    throw DimensionError("clip " + shape_str(v.data.shape()) + " is smaller than the training patch");
  const std::size_t t0 = rng() % (v.frames() - cfg.patch_t + 1);
  const std::size_t y0 = rng() % (v.height() - cfg.patch_h + 1);
  const std::size_t x0 = rng() % (v.width() - cfg.patch_w + 1);
  const bool flip = cfg.hflip && (rng() & 1);
  const std::size_t rot = cfg.rot90 && cfg.patch_h == cfg.patch_w ? rng() % 4 : 0;
  const std::size_t ph = cfg.patch_h, pw = cfg.patch_w;
  Tensor<float> out({c, cfg.patch_t, ph, pw});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < cfg.patch_t; ++t)
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) {
          std::size_t sy = y, sx = flip ? pw - 1 - x : x;
          for (std::size_t k = 0; k < rot; ++k) {
            const std::size_t ny = sx, nx = ph - 1 - sy;
            sy = ny;
            sx = nx;
          }
          out.at(ch, t, y, x) = v.data.at(ch, t0 + t, y0 + sy, x0 + sx);
        }
  return out;
}

template <typename T>
Var<T> encode_on_tape(Tape<T>& tape, const Model& m, const Tensor<T>& patch, std::optional<Var<T>>& raw) {
  if (m.mode == DownsamplerMode::FixedClassical)
    return tape.constant(m.encode(VideoVolume(patch.template cast<float>())).data.template cast<T>());
  if (!raw) raw = tape.leaf(m.filter.raw_weights.template cast<T>(), true);
  return downsample(tape.constant(patch), *raw, m.filter.constraint, m.filter.stride_t, m.filter.stride_s,
                    static_cast<T>(m.filter.range.lo), static_cast<T>(m.filter.range.hi));
}

}  // namespace detail

// Mean PSNR of encode -> decode over the clips, in parallel when threads > 1.
inline double validation_psnr(const Model& m, const std::vector<VideoVolume>& clips, std::size_t threads = 0) {
  if (clips.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> scores(clips.size());
  auto work = [&](std::size_t i) {
    const auto rec = m.decode(m.encode(clips[i]));
    scores[i] = psnr(rec.data, clips[i].data);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < clips.size(); i += threads) work(i);
      });
    for (auto& th : pool) th.join();
  }
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

// Per-channel mean of the encoded clips minus that of the originals.
inline std::vector<double> channel_mean_drift(const Model& m, const std::vector<VideoVolume>& clips) {
  if (clips.empty()) throw EmptyInputError("channel drift needs at least one clip");
  const std::size_t c = clips[0].channels();
  std::vector<double> drift(c, 0.0);
  auto channel_mean = [](const Tensor<float>& t, std::size_t ch) {
    const std::size_t n = t.numel() / t.extent(0);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += t[ch * n + i];
    return acc / static_cast<double>(n);
  };
  for (const auto& v : clips) {
    const auto low = m.encode(v);
    for (std::size_t ch = 0; ch < c; ++ch) drift[ch] += channel_mean(low.data, ch) - channel_mean(v.data, ch);
  }
  for (auto& d : drift) d /= static_cast<double>(clips.size());
  return drift;
}

// One optimization step on a batch of patches; returns the mean L1 loss in
// [0,1] units.
inline double train_step(Model& m, const std::vector<Tensor<float>>& patches, AdamState& adam, double lr) {
  Tape<float> tape;
  std::optional<Var<float>> raw;
  auto vars = bind_params(tape, m.params, true);
  std::vector<Var<float>> losses;
  for (const auto& patch : patches) {
    auto down = detail::encode_on_tape(tape, m, patch, raw);
    auto rec = upscale(down, vars, m.config);
    losses.push_back(l1_loss(rec, tape.constant(patch)));
  }
  auto total = losses.size() == 1 ? losses[0] : sum(concat(
      [&] {
        std::vector<Var<float>> flat;
        for (auto& l : losses) flat.push_back(reshape(l, {1}));
        return flat;
      }(),
      0));
  auto loss = scale(total, 1.0f / (255.0f * static_cast<float>(losses.size())));
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw NumericError("non-finite training loss");
  tape.backward(loss);
  std::map<std::string, Tensor<float>*> targets;
  std::map<std::string, Tensor<float>> grads;
  for (auto& [name, t] : m.params) {
    if (!is_trainable(name)) continue;
    targets[name] = &t;
    grads[name] = tape.grad(vars.at(name));
  }
  if (raw) {
    targets["ds.raw"] = &m.filter.raw_weights;
    grads["ds.raw"] = tape.grad(*raw);
  }
  adam_step(targets, grads, adam, lr);
  return value;
}

// Trains `model` on the clips. The last `val_count` clips are held out for
// validation whenever more clips than that are supplied.
inline TrainResult train(Model model, const std::vector<VideoVolume>& dataset, const TrainConfig& cfg,
                         const std::function<void(const LossRow&)>& on_log = {}) {
  cfg.validate();
  if (dataset.empty()) throw EmptyInputError("training needs at least one clip");
  const std::size_t held = dataset.size() > cfg.val_count ? cfg.val_count : 0;
  const std::vector<VideoVolume> train_set(dataset.begin(), dataset.end() - static_cast<std::ptrdiff_t>(held));
  const std::vector<VideoVolume> val_set(dataset.end() - static_cast<std::ptrdiff_t>(held), dataset.end());
  std::mt19937_64 rng(cfg.seed);
  AdamState adam;
  TrainResult res;
  Checkpoint last_good = to_checkpoint(model, 0);
  double running = 0.0;
  std::size_t running_n = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg);
    std::vector<Tensor<float>> patches;
    for (std::size_t b = 0; b < cfg.batch; ++b)
      patches.push_back(detail::sample_patch(train_set[rng() % train_set.size()], cfg, rng));
    double loss = 0.0;
    try {
      loss = train_step(model, patches, adam, lr);
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(step), last_good);
    }
    running += loss;
    ++running_n;
    const bool last = step + 1 == cfg.steps;
    if (step % cfg.log_every == 0 || last) {
      LossRow row{step, lr, running / static_cast<double>(running_n)};
      running = 0.0;
      running_n = 0;
      if (last || (cfg.val_every && step % cfg.val_every == 0)) row.val_psnr = validation_psnr(model, val_set, cfg.threads);
      if (last) res.val_psnr = row.val_psnr;
      res.curve.push_back(row);
      if (on_log) on_log(row);
    }
    if (cfg.log_every && (step + 1) % cfg.log_every == 0) last_good = to_checkpoint(model, step + 1);
  }
  res.checkpoint = to_checkpoint(model, cfg.steps);
  res.model = std::move(model);
  return res;
}

// Joint training of a learned downsampler with the upsampler.
inline TrainResult train_joint(const std::vector<VideoVolume>& dataset, const UpscaleConfig& ucfg,
                               Constraint constraint, const TrainConfig& cfg,
                               const std::function<void(const LossRow&)>& on_log = {}) {
  return train(Model::create(ucfg, constraint, cfg.seed), dataset, cfg, on_log);
}

// Upsampler-only training behind a frozen temporal box filter (the blur model);
// supervision is the sharp clip.
inline TrainResult train_upsampler_only(const std::vector<VideoVolume>& dataset, const UpscaleConfig& ucfg,
                                        std::size_t box_length, const TrainConfig& cfg,
                                        const std::function<void(const LossRow&)>& on_log = {}) {
  return train(Model::create_fixed(ucfg, ClassicalFilter::box(box_length), cfg.seed), dataset, cfg, on_log);
}

}  // namespace staa
