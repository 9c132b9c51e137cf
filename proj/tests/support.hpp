#ifndef SHIFTBENCH_TEST_SUPPORT_HPP
#define SHIFTBENCH_TEST_SUPPORT_HPP

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "shiftbench/spectral.hpp"
#include "shiftbench/synth.hpp"

namespace testing_support {

using namespace shiftbench;

inline PixelGrid randomGrid(Eigen::Index h, Eigen::Index w, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  PixelGrid g(h, w);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = n(rng);
  return g;
}

inline Spectrum randomSpectrum(Eigen::Index h, Eigen::Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Spectrum s(h, w);
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = {n(rng), n(rng)};
  return s;
}

/// Zeroes the Nyquist row and column (present only for even sizes).
inline Spectrum dropNyquist(Spectrum s) {
  if (s.rows() % 2 == 0) s.row(s.rows() / 2).setZero();
  if (s.cols() % 2 == 0) s.col(s.cols() / 2).setZero();
  return s;
}

/// Unitary 2D DFT by direct summation, standard frequency ordering.
inline Spectrum directDft(const SpectrumOf<double>& g, bool inverse = false) {
  const Eigen::Index h = g.rows();
  const Eigen::Index w = g.cols();
  const double sign = inverse ? 1.0 : -1.0;
  Spectrum out(h, w);
  for (Eigen::Index ky = 0; ky < h; ++ky) {
    for (Eigen::Index kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0.0;
      for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
          const double phase = sign * 2.0 * std::numbers::pi *
                               (static_cast<double>(ky * y) / h + static_cast<double>(kx * x) / w);
          acc += g(y, x) * std::polar(1.0, phase);
        }
      }
      out(ky, kx) = acc / std::sqrt(static_cast<double>(h * w));
    }
  }
  return out;
}

/// Periodic band-limited interpolation kernel whose Nyquist term is cos(pi d).
inline double shannonKernel(Eigen::Index n, double d) {
  double acc = 1.0;
  const Eigen::Index half = (n - 1) / 2;
  for (Eigen::Index k = 1; k <= half; ++k) acc += 2.0 * std::cos(2.0 * std::numbers::pi * k * d / n);
  if (n % 2 == 0) acc += std::cos(std::numbers::pi * d);
  return acc / n;
}

/// Spatial Shannon resampling: out(y, x) = g evaluated at (x + tx, y + ty).
inline PixelGrid spatialUnshift(const PixelGrid& g, const Shift2D& t) {
  const Eigen::Index h = g.rows();
  const Eigen::Index w = g.cols();
  PixelGrid out = PixelGrid::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index r = 0; r < h; ++r) {
        const double ky = shannonKernel(h, static_cast<double>(y) + t.y() - static_cast<double>(r));
        for (Eigen::Index c = 0; c < w; ++c) {
          acc += g(r, c) * ky * shannonKernel(w, static_cast<double>(x) + t.x() - static_cast<double>(c));
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

/// A smooth band-limited test image: random low-pass noise passed through prepareTruth.
inline PixelGrid bandLimitedTruth(Eigen::Index h, Eigen::Index w, std::uint64_t seed) {
  Spectrum s = forwardTransform(randomGrid(h, w, seed, 10.0));
  const Grid<double> f2 = squaredFrequency<double>(h, w);
  s *= (1.0 / (1.0 + 4.0 * f2)).cast<std::complex<double>>();
  return prepareTruth(inverseTransform(s));
}

inline std::filesystem::path dataDir() { return SHIFTBENCH_DATA_DIR; }

inline std::filesystem::path scratchDir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("shiftbench_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support

#endif  // SHIFTBENCH_TEST_SUPPORT_HPP
