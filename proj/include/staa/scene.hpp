#pragma once

// Synthetic single-object scenes: one textured sprite translating with
// constant velocity over a flat background.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "staa/volume.hpp"

namespace staa {

enum class SpriteKind { Checkerboard, Noise, Bar };

struct SceneSpec {
  SpriteKind sprite = SpriteKind::Bar;
  std::size_t sprite_h = 16;
  std::size_t sprite_w = 8;
  std::size_t checker_cell = 4;
  double vx = 0.0;  // pixels per frame along width
  double vy = 0.0;  // pixels per frame along height
  float background = 32.0f;
  std::size_t channels = 3;
  std::size_t frames = 32;
  std::size_t height = 64;
  std::size_t width = 64;
  std::uint64_t seed = 0;

  // Top-left sprite corner at frame t; the trajectory is centred in the frame.
  double x_at(std::size_t t) const {
    return (static_cast<double>(width) - static_cast<double>(sprite_w) - vx * static_cast<double>(frames - 1)) / 2.0 +
           vx * static_cast<double>(t);
  }
  double y_at(std::size_t t) const {
    return (static_cast<double>(height) - static_cast<double>(sprite_h) - vy * static_cast<double>(frames - 1)) / 2.0 +
           vy * static_cast<double>(t);
  }

  // Row through the middle of the sprite at frame 0.
  std::size_t centre_row() const {
    return static_cast<std::size_t>(std::floor(y_at(0))) + sprite_h / 2;
  }
};

namespace detail {

inline void check_axis(double start, double v, std::size_t frames, std::size_t size, std::size_t extent,
                       const char* axis) {
  if (std::abs(v) * static_cast<double>(frames) >= static_cast<double>(extent))
    throw SpecError(std::string("scene velocity along ") + axis + " leaves the frame");
  for (std::size_t t = 0; t < frames; ++t) {
    const double p = start + v * static_cast<double>(t);
    const double lo = std::floor(p);
    const double hi = lo + static_cast<double>(size) + (p > lo ? 1.0 : 0.0);
    if (lo < 0.0 || hi > static_cast<double>(extent))
      throw SpecError(std::string("sprite leaves the frame along ") + axis);
  }
}

}  // namespace detail

inline void validate(const SceneSpec& s) {
  if (s.channels != 1 && s.channels != 3) throw SpecError("scene channels must be 1 or 3");
  if (s.frames == 0 || s.height == 0 || s.width == 0) throw SpecError("scene extents must be >= 1");
  if (s.sprite_h == 0 || s.sprite_w == 0) throw SpecError("sprite must be non-empty");
  if (s.sprite != SpriteKind::Bar && s.checker_cell == 0) throw SpecError("texture cell must be >= 1");
  detail::check_axis(s.x_at(0), s.vx, s.frames, s.sprite_w, s.width, "x");
  detail::check_axis(s.y_at(0), s.vy, s.frames, s.sprite_h, s.height, "y");
}

// Renders the scene; sub-pixel positions are bilinearly splatted.
inline VideoVolume generate_scene(const SceneSpec& s) {
  validate(s);
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<float> level(0.0f, 255.0f);
  std::array<float, 3> colour_a{}, colour_b{};
  for (std::size_t c = 0; c < s.channels; ++c) {
    colour_a[c] = level(rng);
    colour_b[c] = level(rng);
  }
  // Value noise: uniform knots every checker_cell pixels, bilinearly
  // interpolated, blending the two colours.
  const std::size_t cell = std::max<std::size_t>(1, s.checker_cell);
  const std::size_t gh = s.sprite_h / cell + 2, gw = s.sprite_w / cell + 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> knots(gh * gw);
  if (s.sprite == SpriteKind::Noise)
    for (auto& k : knots) k = unit(rng);
  auto field = [&](std::size_t i, std::size_t j) {
    const double y = static_cast<double>(i) / static_cast<double>(cell);
    const double x = static_cast<double>(j) / static_cast<double>(cell);
    const std::size_t y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * knots[y0 * gw + x0] + fx * knots[y0 * gw + x0 + 1]) +
           fy * ((1 - fx) * knots[(y0 + 1) * gw + x0] + fx * knots[(y0 + 1) * gw + x0 + 1]);
  };
  // Sprite texture (C, sh, sw).
  Tensor<float> sprite({s.channels, s.sprite_h, s.sprite_w});
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t i = 0; i < s.sprite_h; ++i)
      for (std::size_t j = 0; j < s.sprite_w; ++j) {
        float v = colour_a[c];
        if (s.sprite == SpriteKind::Checkerboard) {
          if (((i / s.checker_cell) + (j / s.checker_cell)) % 2) v = colour_b[c];
        } else if (s.sprite == SpriteKind::Noise) {
          const double a = field(i, j);
          v = static_cast<float>((1.0 - a) * colour_a[c] + a * colour_b[c]);
        }
        sprite.at(c, i, j) = v;
      }

  const std::size_t hw = s.height * s.width;
  Tensor<float> data({s.channels, s.frames, s.height, s.width});
  std::vector<double> alpha(hw), acc(s.channels * hw);
  for (std::size_t t = 0; t < s.frames; ++t) {
    std::fill(alpha.begin(), alpha.end(), 0.0);
    std::fill(acc.begin(), acc.end(), 0.0);
    const double px = s.x_at(t), py = s.y_at(t);
    const auto x0 = static_cast<std::size_t>(std::floor(px));
    const auto y0 = static_cast<std::size_t>(std::floor(py));
    const double fx = px - std::floor(px), fy = py - std::floor(py);
    const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
    for (std::size_t i = 0; i < s.sprite_h; ++i)
      for (std::size_t j = 0; j < s.sprite_w; ++j)
        for (int k = 0; k < 4; ++k) {
          if (wts[k] == 0.0) continue;
          const std::size_t y = y0 + i + static_cast<std::size_t>(k / 2);
          const std::size_t x = x0 + j + static_cast<std::size_t>(k % 2);
          alpha[y * s.width + x] += wts[k];
          for (std::size_t c = 0; c < s.channels; ++c)
            acc[c * hw + y * s.width + x] += wts[k] * sprite.at(c, i, j);
        }
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < hw; ++p)
        data[(c * s.frames + t) * hw + p] =
            static_cast<float>(s.background * (1.0 - alpha[p]) + acc[c * hw + p]);
  }
  return VideoVolume(std::move(data));
}

// Desk-scale training corpus: `count` scenes with random sprites and speeds
// in [0, max_speed] px/frame in a random direction.
inline std::vector<VideoVolume> synthetic_corpus(std::size_t count, std::size_t frames, std::size_t height,
                                                 std::size_t width, std::uint64_t seed,
                                                 double max_speed = 3.0) {
  std::vector<VideoVolume> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 6.283185307179586;
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s;
    s.frames = frames;
    s.height = height;
    s.width = width;
    s.seed = rng();
    s.sprite = static_cast<SpriteKind>(rng() % 3);
    const double speed = max_speed * unit(rng);
    const double angle = two_pi * unit(rng);
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    s.background = static_cast<float>(255.0 * unit(rng));
    s.checker_cell = 2 + rng() % 4;
    const auto room = [&](double v, std::size_t extent) {
      const double travel = std::ceil(std::abs(v) * static_cast<double>(frames - 1)) + 1.0;
      return static_cast<std::size_t>(std::max(1.0, static_cast<double>(extent) - travel));
    };
    const std::size_t max_w = std::min<std::size_t>(room(s.vx, width), width * 3 / 4);
    const std::size_t max_h = std::min<std::size_t>(room(s.vy, height), height * 3 / 4);
    s.sprite_w = std::max<std::size_t>(1, max_w / 2 + rng() % (max_w / 2 + 1));
    s.sprite_h = std::max<std::size_t>(1, max_h / 2 + rng() % (max_h / 2 + 1));
    out.push_back(generate_scene(s));
  }
  return out;
}

}  // namespace staa
