#pragma once

// Reverse-mode differentiation tape over dense tensors.
//
// A Tape records nodes in creation order, so input ids are always smaller
// than the id of the node consuming them and a single reverse sweep visits
// the graph in reverse topological order.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "staa/tensor.hpp"

namespace staa {

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
};

template <typename T>
class Tape {
public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::string op;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool needs_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    nodes_.push_back(Node{"leaf", std::move(value), {}, {}, requires_grad});
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends an op node. The backward closure is dropped when no input needs
  // a gradient, which keeps inference graphs cheap.
  Var<T> record(std::string op, Tensor<T> value, std::vector<std::size_t> inputs,
                Backward backward) {
    bool needs = false;
    for (auto in : inputs) {
      if (in >= nodes_.size()) throw DimensionError("tape input id out of range in " + op);
      needs = needs || nodes_[in].needs_grad;
    }
    if (!needs) backward = nullptr;
    nodes_.push_back(Node{std::move(op), std::move(value), std::move(inputs),
                          std::move(backward), needs});
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient flowing into node `id` during the sweep.
  const Tensor<T>& upstream(std::size_t id) const { return *grads_.at(id); }

  // Accumulator for node `id`, zero-initialized on first touch. Returns
  // nullptr when the node does not need a gradient.
  Tensor<T>* accum(std::size_t id) {
    if (!nodes_[id].needs_grad) return nullptr;
    auto& g = grads_[id];
    if (!g) g.emplace(nodes_[id].value.shape(), T(0));
    return &*g;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw DimensionError("loss belongs to another tape");
    if (value(loss.id).numel() != 1)
      throw DimensionError("backward needs a scalar loss, got shape " +
                           shape_str(value(loss.id).shape()));
    grads_.assign(nodes_.size(), std::nullopt);
    if (!nodes_[loss.id].needs_grad) return;
    grads_[loss.id].emplace(value(loss.id).shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!grads_[i] || !nodes_[i].backward) continue;
      nodes_[i].backward(*this, i);
    }
  }

  // Gradient of the last backward() loss with respect to `v`. Nodes that the
  // loss does not reach report zeros of the right shape.
  Tensor<T> grad(Var<T> v) const {
    if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
    return Tensor<T>(value(v.id).shape(), T(0));
  }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

private:
  std::deque<Node> nodes_;  // stable references while recording
  std::vector<std::optional<Tensor<T>>> grads_;
};

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  for (auto v : t.data())
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename F, typename D>
Var<T> unary(const char* name, Var<T> x, F f, D dfdx) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  return x.tape->record(name, std::move(out), {x.id},
                        [x, dfdx](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          const auto& xv = tp.value(x.id);
                          const auto& yv = tp.value(self);
                          auto* gx = tp.accum(x.id);
                          for (std::size_t i = 0; i < g.numel(); ++i)
                            (*gx)[i] += g[i] * dfdx(xv[i], yv[i]);
                        });
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record("add", std::move(out), {a.id, b.id},
                        [a, b](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          for (auto id : {a.id, b.id})
                            if (auto* acc = tp.accum(id))
                              for (std::size_t i = 0; i < g.numel(); ++i) (*acc)[i] += g[i];
                        });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record("sub", std::move(out), {a.id, b.id},
                        [a, b](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          if (auto* ga = tp.accum(a.id))
                            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i];
                          if (auto* gb = tp.accum(b.id))
                            for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
                        });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record("mul", std::move(out), {a.id, b.id},
                        [a, b](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          const auto& av = tp.value(a.id);
                          const auto& bv = tp.value(b.id);
                          if (auto* ga = tp.accum(a.id))
                            for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
                          if (auto* gb = tp.accum(b.id))
                            for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
                        });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  return detail::unary<T>("scale", x, [c](T v) { return c * v; },
                          [c](T, T) { return c; });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                          [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T negative_slope = T(0.1)) {
  return detail::unary<T>(
      "leaky_relu", x, [negative_slope](T v) { return v > T(0) ? v : negative_slope * v; },
      [negative_slope](T v, T) { return v > T(0) ? T(1) : negative_slope; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary<T>("sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                          [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>("tanh", x, [](T v) { return std::tanh(v); },
                          [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  auto out = x.value().reshaped(std::move(shape));
  return x.tape->record("reshape", std::move(out), {x.id},
                        [x](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          auto* gx = tp.accum(x.id);
                          for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
                        });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v;
  return x.tape->record("sum", Tensor<T>::scalar(s), {x.id},
                        [x](Tape<T>& tp, std::size_t self) {
                          const T g = tp.upstream(self)[0];
                          auto* gx = tp.accum(x.id);
                          for (auto& v : gx->data()) v += g;
                        });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// mean |a - b|; the subgradient at a == b is 0.
template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "l1_loss");
  const auto& av = a.value();
  const auto& bv = b.value();
  T s = 0;
  for (std::size_t i = 0; i < av.numel(); ++i) s += std::abs(av[i] - bv[i]);
  const T inv_n = T(1) / static_cast<T>(av.numel());
  return a.tape->record(
      "l1_loss", Tensor<T>::scalar(s * inv_n), {a.id, b.id},
      [a, b, inv_n](Tape<T>& tp, std::size_t self) {
        const T g = tp.upstream(self)[0] * inv_n;
        const auto& av = tp.value(a.id);
        const auto& bv = tp.value(b.id);
        auto* ga = tp.accum(a.id);
        auto* gb = tp.accum(b.id);
        for (std::size_t i = 0; i < av.numel(); ++i) {
          const T d = av[i] - bv[i];
          const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
          if (ga) (*ga)[i] += sg;
          if (gb) (*gb)[i] -= sg;
        }
      });
}

// Numerically stable softmax over every element of the tensor.
template <typename T>
Var<T> softmax_flat(Var<T> w) {
  const auto& wv = w.value();
  detail::require_finite(wv, "softmax_flat");
  T mx = wv[0];
  for (auto v : wv.data()) mx = std::max(mx, v);
  Tensor<T> out(wv.shape());
  T z = 0;
  for (std::size_t i = 0; i < wv.numel(); ++i) z += (out[i] = std::exp(wv[i] - mx));
  for (auto& v : out.data()) v /= z;
  return w.tape->record("softmax_flat", std::move(out), {w.id},
                        [w](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          const auto& y = tp.value(self);
                          T dot = 0;
                          for (std::size_t i = 0; i < g.numel(); ++i) dot += g[i] * y[i];
                          auto* gw = tp.accum(w.id);
                          for (std::size_t i = 0; i < g.numel(); ++i)
                            (*gw)[i] += y[i] * (g[i] - dot);
                        });
}

namespace detail {

// Splits a shape around `axis` into (outer, axis extent, inner) block sizes.
inline void axis_blocks(const Shape& s, std::size_t axis, std::size_t& outer,
                        std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw EmptyInputError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw DimensionError("concat shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    out_shape[axis] += s[axis];
  }
  std::size_t outer, inner;
  detail::axis_blocks(out_shape, axis, outer, inner);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto& pv = p.value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().begin() + o * w, w,
                  out.data().begin() + o * out_shape[axis] * inner + offset);
    offset += w;
    ids.push_back(p.id);
    widths.push_back(w);
  }
  const std::size_t row = out_shape[axis] * inner;
  return parts[0].tape->record(
      "concat", std::move(out), ids,
      [ids, widths, outer, row](Tape<T>& tp, std::size_t self) {
        const auto& g = tp.upstream(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (auto* acc = tp.accum(ids[k]))
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < widths[k]; ++i)
                (*acc)[o * widths[k] + i] += g[o * row + off + i];
          off += widths[k];
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("slice axis out of range");
  if (length == 0 || start + length > s[axis])
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") outside extent " + std::to_string(s[axis]));
  Shape out_shape = s;
  out_shape[axis] = length;
  std::size_t outer, inner;
  detail::axis_blocks(s, axis, outer, inner);
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = length * inner;
  const std::size_t off = start * inner;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data().begin() + o * in_row + off, w, out.data().begin() + o * w);
  return x.tape->record("slice", std::move(out), {x.id},
                        [x, outer, in_row, w, off](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          auto* gx = tp.accum(x.id);
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < w; ++i)
                              (*gx)[o * in_row + off + i] += g[o * w + i];
                        });
}

// Adds a per-channel bias b (C) to x (C, ...).
template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> b) {
  const Shape& s = x.shape();
  if (s.empty() || b.numel() != s[0])
    throw DimensionError("bias length " + std::to_string(b.numel()) + " vs channels " +
                         shape_str(s));
  const std::size_t inner = x.numel() / s[0];
  Tensor<T> out = x.value();
  for (std::size_t c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < inner; ++i) out[c * inner + i] += b.value()[c];
  return x.tape->record("add_channel_bias", std::move(out), {x.id, b.id},
                        [x, b, inner](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.upstream(self);
                          if (auto* gx = tp.accum(x.id))
                            for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
                          if (auto* gb = tp.accum(b.id))
                            for (std::size_t c = 0; c < gb->numel(); ++c)
                              for (std::size_t i = 0; i < inner; ++i)
                                (*gb)[c] += g[c * inner + i];
                        });
}

}  // namespace staa
