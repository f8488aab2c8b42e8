#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "staa/spectral.hpp"

using namespace staa;

namespace {

std::vector<cplx> naive_dft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      out[k] += x[j] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(j * k) / static_cast<double>(n));
  return out;
}

SceneSpec moving_scene(double vx) {
  SceneSpec s;
  s.sprite = SpriteKind::Bar;
  s.sprite_w = 2;
  s.vx = vx;
  s.frames = 32;
  s.background = 0.0f;
  return s;
}

}  // namespace

TEST(Dft, MatchesNaiveSummation) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t n : {1u, 2u, 5u, 8u, 12u, 32u}) {
    std::vector<cplx> x(n);
    for (auto& v : x) v = {u(rng), u(rng)};
    const auto want = naive_dft(x);
    auto got = x;
    dft_inplace(got);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(got[k] - want[k]), 1e-10) << "n=" << n;
  }
}

TEST(Dft, Parseval2d) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(6 * 8);
  double energy = 0.0;
  for (auto& v : x) {
    v = u(rng);
    energy += v * v;
  }
  double spectral = 0.0;
  for (const auto& f : dft2d(x, 6, 8)) spectral += std::norm(f);
  EXPECT_NEAR(spectral / static_cast<double>(x.size()), energy, 1e-9);
}

TEST(Spectrum, ZeroFrequencyIsCentred) {
  EXPECT_DOUBLE_EQ(centred_frequency(4, 8), 0.0);
  EXPECT_DOUBLE_EQ(centred_frequency(0, 8), -0.5);
  EXPECT_DOUBLE_EQ(centred_frequency(2, 5), 0.0);
  // A pure temporal cosine at 1/8 cycles per frame peaks at rows 3 and 5.
  Tensor<double> p({8, 4});
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t x = 0; x < 4; ++x) p.at(t, x) = std::cos(2.0 * M_PI * static_cast<double>(t) / 8.0);
  const auto rep = xt_spectrum(p);
  EXPECT_NEAR(rep.magnitude.at(3, 2), 16.0, 1e-9);
  EXPECT_NEAR(rep.magnitude.at(5, 2), 16.0, 1e-9);
  EXPECT_NEAR(rep.total_energy, 512.0, 1e-9);
  EXPECT_THROW(xt_spectrum(Tensor<double>({1, 4})), DimensionError);
}

TEST(Spectrum, StaticSceneHasNoAliasing) {
  for (const auto& f : {DownsamplingFilter(ClassicalFilter::nearest()), DownsamplingFilter(ClassicalFilter::box(2)),
                        DownsamplingFilter(ClassicalFilter::gaussian())}) {
    const auto rep = aliasing_report(moving_scene(0.0), f, 2, 1);
    EXPECT_LT(rep.alias_fraction, 1e-6) << rep.filter;
  }
}

TEST(Spectrum, MovingBarSlope) {
  for (double vx : {0.5, 1.0}) {
    const auto gt = generate_scene(moving_scene(vx));
    const auto rep = xt_spectrum(mean_xt_profile(gt.data, moving_scene(vx).centre_row()));
    EXPECT_NEAR(dominant_slope(rep), -vx, 0.1) << vx;
    EXPECT_GT(line_energy(rep, vx, 1.0 / 32.0), 0.85);  // window edges leak the rest
  }
}

TEST(Spectrum, AliasOrderingAtUnitSpeed) {
  const auto scene = moving_scene(1.0);
  for (std::size_t rs : {1u, 2u}) {
    const double nearest = aliasing_report(scene, ClassicalFilter::nearest(), 2, rs).alias_fraction;
    const double box = aliasing_report(scene, ClassicalFilter::box(2), 2, rs).alias_fraction;
    const double gauss = aliasing_report(scene, ClassicalFilter::gaussian(), 2, rs).alias_fraction;
    EXPECT_GT(nearest, box) << rs;
    EXPECT_GT(box, gauss) << rs;
  }
}

TEST(Spectrum, TaperRemovesWindowLeakage) {
  const auto scene = moving_scene(1.0);
  const auto gt = generate_scene(scene);
  const auto profile = mean_xt_profile(gt.data, scene.centre_row());
  const double raw = 1.0 - line_energy(xt_spectrum(profile), 1.0, 2.0 / 32.0);
  const double hann = 1.0 - line_energy(xt_spectrum(profile, Taper::HannTime), 1.0, 2.0 / 32.0);
  EXPECT_LT(hann, 0.1 * raw);
}

TEST(Spectrum, HannStaticIsExactlyOnLine) {
  const auto rep = aliasing_report(moving_scene(0.0), ClassicalFilter::nearest(), 2, 2);
  EXPECT_LT(rep.alias_fraction, 1e-12);
  EXPECT_LT(1.0 - line_energy(rep.original, 0.0, 2.0 / 32.0), 1e-12);
}

TEST(Spectrum, BoxNotches) {
  const auto rep = aliasing_report(moving_scene(1.0), ClassicalFilter::box(2), 2, 1);
  ASSERT_EQ(rep.temporal_notches.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.temporal_notches[0], -0.5);
  const auto four = temporal_response(ClassicalFilter::box(4), 32);
  for (double om : {-0.5, -0.25, 0.25}) EXPECT_LT(four[static_cast<std::size_t>((om + 0.5) * 32)], 1e-12);
  EXPECT_NEAR(four[16], 1.0, 1e-12);
}

TEST(Spectrum, LearnedFilterResponse) {
  // Uniform softmax kernel has a flat 3-tap temporal average.
  const auto resp = temporal_response(FilterBank{}, 3);
  EXPECT_NEAR(resp[1], 1.0, 1e-6);
  EXPECT_NEAR(resp[0], 0.0, 1e-6);
}

TEST(Spectrum, LineEnergyErrors) {
  Tensor<double> p({4, 4});
  const auto rep = xt_spectrum(p);
  EXPECT_DOUBLE_EQ(line_energy(rep, 1.0, 0.1), 1.0);
  EXPECT_THROW(line_energy(rep, 1.0, -0.1), RangeError);
}

TEST(Spectrum, PgmOutput) {
  const auto path = std::filesystem::temp_directory_path() / "staa_spectrum_test.pgm";
  const auto rep = aliasing_report(moving_scene(1.0), ClassicalFilter::nearest(), 2, 1);
  write_spectrum_pgm(rep.restored, path);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 64u);
  EXPECT_EQ(h, 32u);
  EXPECT_EQ(maxv, 255u);
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(payload.size(), 64u * 32u);
  std::filesystem::remove(path);
}
