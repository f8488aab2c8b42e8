#pragma once

// Fourier analysis of xt temporal profiles.
//
// For an object translating with velocity v_x the continuous spectrum of the
// xt profile lies on the line Omega_x * v_x + Omega_t = 0. Downsampling
// replicates that line into sub-bands; the energy found away from the line
// after restoring the original sampling grid measures the aliasing a
// filter lets through. Frequencies are in cycles per sample.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "staa/baselines.hpp"
#include "staa/downsampler.hpp"
#include "staa/scene.hpp"
#include "staa/upsampler.hpp"

namespace staa {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

// Forward DFT of a strided sequence: radix-2 FFT for power-of-two lengths,
// direct summation otherwise.
inline void dft_inplace(std::vector<cplx>& a) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  const double two_pi = 6.283185307179586476925;
  if (!is_pow2(n)) {
    std::vector<cplx> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      cplx acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += a[j] * std::polar(1.0, -two_pi * static_cast<double>((k * j) % n) / static_cast<double>(n));
      out[k] = acc;
    }
    a.swap(out);
    return;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -two_pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx w = std::polar(1.0, ang * static_cast<double>(k));
        const cplx u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
  }
}

// 2D DFT of a row-major (rows, cols) array, unshifted.
inline std::vector<cplx> dft2d(const std::vector<double>& x, std::size_t rows, std::size_t cols) {
  std::vector<cplx> a(x.begin(), x.end());
  std::vector<cplx> line(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, line.begin());
    dft_inplace(line);
    std::copy(line.begin(), line.end(), a.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  line.resize(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) line[r] = a[r * cols + c];
    dft_inplace(line);
    for (std::size_t r = 0; r < rows; ++r) a[r * cols + c] = line[r];
  }
  return a;
}

// Signed frequency (cycles/sample) of centred index i on an n-point grid.
inline double centred_frequency(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) - static_cast<double>(n / 2)) / static_cast<double>(n);
}

struct SpectrumReport {
  Tensor<double> magnitude;  // (T, W), zero frequency at (T/2, W/2)
  double total_energy = 0.0;

  std::size_t rows() const { return magnitude.extent(0); }
  std::size_t cols() const { return magnitude.extent(1); }
  double omega_t(std::size_t i) const { return centred_frequency(i, rows()); }
  double omega_x(std::size_t j) const { return centred_frequency(j, cols()); }
};

enum class Taper { None, HannTime };

// Magnitude spectrum of a mean-subtracted (T, W) profile. HannTime tapers
// each column over time, which suppresses the leakage caused by a motion
// that does not wrap around the clip.
inline SpectrumReport xt_spectrum(const Tensor<double>& profile, Taper taper = Taper::None) {
  if (profile.rank() != 2 || profile.extent(0) < 2 || profile.extent(1) < 2)
    throw DimensionError("xt_spectrum needs a (T,W) profile with both extents >= 2");
  const std::size_t t = profile.extent(0), w = profile.extent(1);
  double m = 0.0;
  for (auto v : profile.data()) m += v;
  m /= static_cast<double>(profile.numel());
  std::vector<double> centred(profile.numel());
  for (std::size_t i = 0; i < centred.size(); ++i) centred[i] = profile[i] - m;
  if (taper == Taper::HannTime)
    for (std::size_t i = 0; i < t; ++i) {
      const double wt = 0.5 - 0.5 * std::cos(6.283185307179586 * static_cast<double>(i) / static_cast<double>(t));
      for (std::size_t j = 0; j < w; ++j) centred[i * w + j] *= wt;
    }
  const auto f = dft2d(centred, t, w);
  SpectrumReport rep;
  rep.magnitude = Tensor<double>({t, w});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t si = (i + t - t / 2) % t, sj = (j + w - w / 2) % w;
      const double mag = std::abs(f[si * w + sj]);
      rep.magnitude.at(i, j) = mag;
      rep.total_energy += mag * mag;
    }
  return rep;
}

// Distance to the nearest integer, so that the line wraps around the
// periodic frequency plane.
inline double wrapped(double x) { return x - std::round(x); }

// Fraction of spectral energy within |Omega_x v_x + Omega_t| <= b.
inline double line_energy(const SpectrumReport& rep, double vx, double bandwidth) {
  if (bandwidth < 0.0) throw RangeError("bandwidth must be >= 0");
  if (rep.total_energy <= 0.0) return 1.0;
  double inside = 0.0;
  for (std::size_t i = 0; i < rep.rows(); ++i)
    for (std::size_t j = 0; j < rep.cols(); ++j)
      if (std::abs(wrapped(rep.omega_x(j) * vx + rep.omega_t(i))) <= bandwidth + 1e-12) {
        const double m = rep.magnitude.at(i, j);
        inside += m * m;
      }
  return std::min(1.0, inside / rep.total_energy);
}

// Least-squares slope dOmega_t/dOmega_x through the per-column peaks, i.e.
// -v_x for a uniformly moving object. Columns with |Omega_x| >= max_omega or
// a peak below `rel_threshold` of the strongest peak are ignored.
inline double dominant_slope(const SpectrumReport& rep, double max_omega = 0.2, double rel_threshold = 0.05) {
  double strongest = 0.0;
  std::vector<std::pair<double, double>> peaks;  // (Omega_x, Omega_t) with magnitude
  std::vector<double> mags;
  for (std::size_t j = 0; j < rep.cols(); ++j) {
    const double ox = rep.omega_x(j);
    if (ox == 0.0 || std::abs(ox) >= max_omega) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < rep.rows(); ++i)
      if (rep.magnitude.at(i, j) > rep.magnitude.at(best, j)) best = i;
    peaks.emplace_back(ox, rep.omega_t(best));
    mags.push_back(rep.magnitude.at(best, j));
    strongest = std::max(strongest, mags.back());
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    if (mags[k] < rel_threshold * strongest) continue;
    sxy += peaks[k].first * peaks[k].second;
    sxx += peaks[k].first * peaks[k].first;
  }
  if (sxx == 0.0) throw NumericError("no significant spectral peaks to fit");
  return sxy / sxx;
}

using DownsamplingFilter = std::variant<ClassicalFilter, FilterBank>;

inline std::string filter_name(const DownsamplingFilter& f) {
  if (const auto* c = std::get_if<ClassicalFilter>(&f)) return c->name();
  return "staa";
}

// Channel-mean xt profile (T, W) at a fixed row.
inline Tensor<double> mean_xt_profile(const Tensor<float>& v, std::size_t row) {
  const auto p = temporal_profile(v, ProfileAxis::Row, row);
  const std::size_t c = p.extent(0), t = p.extent(1), w = p.extent(2);
  Tensor<double> out({t, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < t * w; ++i) out[i] += p[ch * t * w + i] / static_cast<double>(c);
  return out;
}

struct AliasReport {
  std::string filter;
  double vx = 0.0;
  SpectrumReport original;
  SpectrumReport restored;
  double line_fraction = 0.0;   // of the restored profile
  double alias_fraction = 0.0;  // 1 - line_fraction
  std::vector<double> temporal_notches;  // Omega_t where the filter's temporal response vanishes
};

// Temporal frequency response magnitude of the filter sampled on an n-point grid.
inline std::vector<double> temporal_response(const DownsamplingFilter& f, std::size_t n) {
  std::vector<double> taps;
  if (const auto* c = std::get_if<ClassicalFilter>(&f)) {
    switch (c->kind) {
      case ClassicalKind::Nearest:
      case ClassicalKind::Bicubic: taps = {1.0}; break;
      case ClassicalKind::Gaussian3d: taps = gaussian_kernel(c->sigma_t, c->extent); break;
      case ClassicalKind::BoxTemporal: taps.assign(c->box_length, 1.0 / static_cast<double>(c->box_length)); break;
    }
  } else {
    const auto k = effective_kernel(std::get<FilterBank>(f));
    const std::size_t kt = k.rank() == 4 ? k.extent(1) : k.extent(0);
    const std::size_t per = k.numel() / kt / (k.rank() == 4 ? k.extent(0) : 1);
    taps.assign(kt, 0.0);
    const std::size_t banks = k.rank() == 4 ? k.extent(0) : 1;
    for (std::size_t b = 0; b < banks; ++b)
      for (std::size_t i = 0; i < kt; ++i)
        for (std::size_t j = 0; j < per; ++j) taps[i] += k[(b * kt + i) * per + j] / static_cast<double>(banks);
  }
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double om = centred_frequency(i, n);
    cplx acc = 0.0;
    for (std::size_t k = 0; k < taps.size(); ++k)
      acc += taps[k] * std::polar(1.0, -6.283185307179586 * om * static_cast<double>(k));
    mag[i] = std::abs(acc);
  }
  return mag;
}

inline VideoVolume apply_filter(const VideoVolume& v, const DownsamplingFilter& f, std::size_t r, std::size_t s) {
  if (const auto* c = std::get_if<ClassicalFilter>(&f)) return classical_downsample(v, *c, r, s);
  auto fb = std::get<FilterBank>(f);
  fb.stride_t = r;
  fb.stride_s = s;
  return downsample(v, fb);
}

// Downsamples the scene, restores the original grid trilinearly and compares
// the xt spectra at the sprite's centre row.
inline AliasReport aliasing_report(const SceneSpec& scene, const DownsamplingFilter& filter, std::size_t r,
                                   std::size_t s, double bandwidth = -1.0, Taper taper = Taper::HannTime) {
  const auto gt = generate_scene(scene);
  const auto down = apply_filter(gt, filter, r, s);
  auto up = trilinear_upscale(down.data.cast<double>(), Rational(static_cast<std::uint32_t>(r), 1), s);
  // Crop to the original extents (ceil division can overshoot).
  Tensor<float> restored(gt.data.shape());
  for (std::size_t c = 0; c < gt.channels(); ++c)
    for (std::size_t t = 0; t < gt.frames(); ++t)
      for (std::size_t y = 0; y < gt.height(); ++y)
        for (std::size_t x = 0; x < gt.width(); ++x)
          restored.at(c, t, y, x) = static_cast<float>(up.at(c, t, y, x));
  const std::size_t row = scene.centre_row();
  // Default band: the taper's main-lobe half-width.
  if (bandwidth < 0.0) bandwidth = (taper == Taper::HannTime ? 2.0 : 1.0) / static_cast<double>(scene.frames);
  AliasReport rep;
  rep.filter = filter_name(filter);
  rep.vx = scene.vx;
  rep.original = xt_spectrum(mean_xt_profile(gt.data, row), taper);
  rep.restored = xt_spectrum(mean_xt_profile(restored, row), taper);
  rep.line_fraction = line_energy(rep.restored, scene.vx, bandwidth);
  rep.alias_fraction = 1.0 - rep.line_fraction;
  const auto resp = temporal_response(filter, scene.frames);
  double peak = 0.0;
  for (double m : resp) peak = std::max(peak, m);
  for (std::size_t i = 0; i < resp.size(); ++i)
    if (resp[i] < 1e-3 * peak) rep.temporal_notches.push_back(centred_frequency(i, scene.frames));
  return rep;
}

// Binary PGM of log10(1 + |F|) scaled to [0, 255].
inline void write_spectrum_pgm(const SpectrumReport& rep, const std::filesystem::path& path) {
  const std::size_t t = rep.rows(), w = rep.cols();
  std::vector<double> lg(t * w);
  double mx = 0.0;
  for (std::size_t i = 0; i < lg.size(); ++i) mx = std::max(mx, lg[i] = std::log10(1.0 + rep.magnitude[i]));
  std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(t) + "\n255\n";
  for (double v : lg) bytes.push_back(static_cast<char>(mx > 0.0 ? static_cast<int>(std::lround(255.0 * v / mx)) : 0));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace staa
