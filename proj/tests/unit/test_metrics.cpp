#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "staa/metrics.hpp"

using namespace staa;

namespace {

Tensor<float> rand_video(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<float> t(std::move(s));
  for (auto& v : t.data()) v = static_cast<float>(rng() % 256);
  return t;
}

// Direct windowed SSIM: explicit 11x11 sums at every valid position.
double ssim_oracle(const Tensor<float>& a, const Tensor<float>& b) {
  const std::size_t c = a.extent(0), t = a.extent(1), h = a.extent(2), w = a.extent(3);
  double g[11], gs = 0.0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
  for (double& v : g) v /= gs;
  const double c1 = 6.5025, c2 = 58.5225;
  double total = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t f = 0; f < t; ++f) {
      double frame = 0.0;
      for (std::size_t y = 0; y + 11 <= h; ++y)
        for (std::size_t x = 0; x + 11 <= w; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (std::size_t i = 0; i < 11; ++i)
            for (std::size_t j = 0; j < 11; ++j) {
              const double wt = g[i] * g[j], pa = a.at(ch, f, y + i, x + j), pb = b.at(ch, f, y + i, x + j);
              ma += wt * pa;
              mb += wt * pb;
              saa += wt * pa * pa;
              sbb += wt * pb * pb;
              sab += wt * pa * pb;
            }
          const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
          frame += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
      total += frame / static_cast<double>((h - 10) * (w - 10));
    }
  return total / static_cast<double>(c * t);
}

}  // namespace

TEST(Psnr, UniformErrorOfOne) {
  auto a = rand_video({3, 2, 8, 8}, 1);
  for (auto& v : a.data()) v = std::min(v, 254.0f);
  auto b = a;
  for (auto& v : b.data()) v += 1.0f;
  EXPECT_NEAR(psnr(a, b), 48.1308, 1e-4);
}

TEST(Psnr, IdenticalIsInfinite) {
  const auto a = rand_video({3, 2, 8, 8}, 2);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
}

TEST(Psnr, MatchesDirectFormula) {
  const auto a = rand_video({3, 2, 16, 16}, 3), b = rand_video({3, 2, 16, 16}, 4);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  const double want = 10.0 * std::log10(255.0 * 255.0 / (acc / static_cast<double>(a.numel())));
  EXPECT_NEAR(psnr(a, b), want, 1e-6);
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_THROW(psnr(rand_video({3, 1, 4, 4}, 5), rand_video({3, 1, 4, 5}, 5)), DimensionError);
}

TEST(Ssim, MatchesWindowOracle) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto a = rand_video({3, 2, 16, 16}, 10 + seed);
    auto b = a;
    std::mt19937_64 rng(seed);
    for (auto& v : b.data()) v = std::clamp(v + static_cast<float>(static_cast<int>(rng() % 41) - 20), 0.0f, 255.0f);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
  }
}

TEST(Ssim, IdenticalIsOne) {
  const auto a = rand_video({3, 1, 12, 12}, 6);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_THROW(ssim(rand_video({3, 1, 10, 12}, 7), rand_video({3, 1, 10, 12}, 7)), DimensionError);
}

TEST(Luma, Bt601Weights) {
  Tensor<float> a({3, 1, 1, 1}), b({3, 1, 1, 1});
  a[0] = 100;
  a[1] = 100;
  a[2] = 100;
  b = a;
  b[0] = 110;  // luma moves by 2.99
  const double want = 10.0 * std::log10(255.0 * 255.0 / (2.99 * 2.99));
  EXPECT_NEAR(psnr(a, b, 255.0, ColorSpace::Luma), want, 1e-4);
}

TEST(Quality, PixelPercentage) {
  EXPECT_DOUBLE_EQ(pixel_percentage(2, 2), 0.125);
  EXPECT_DOUBLE_EQ(pixel_percentage(1, 2), 0.25);
  EXPECT_DOUBLE_EQ(pixel_percentage(2, 1), 0.5);
  EXPECT_THROW(pixel_percentage(0.5, 1), RangeError);
}
