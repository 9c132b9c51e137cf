#ifndef SHIFTBENCH_SPECTRAL_HPP
#define SHIFTBENCH_SPECTRAL_HPP

// Fourier machinery shared by the generators and every estimator: unitary
// 2D DFT, the band-limited (Shannon) shift operator, and the 1/|w|^2
// natural-image prior with its Wiener filter.
//
// Conventions:
//   * DFT is unitary, so sum |g|^2 == sum |G|^2.
//   * Frequencies are in radians/pixel in standard DFT order: index k maps
//     to 2*pi*k/n for k < n/2 and 2*pi*(k-n)/n otherwise; for even n the
//     Nyquist bin k = n/2 maps to -pi.
//   * applyShift(s, t) multiplies by exp(-i w.t), moving image content by +t.
//   * On Nyquist bins the phase is replaced by its real part cos(pi t) so that
//     spectra of real images stay Hermitian under fractional shifts.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "shiftbench/types.hpp"

namespace shiftbench {

template <typename Scalar>
using AxisVector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline bool isNyquistBin(Eigen::Index k, Eigen::Index n) { return n % 2 == 0 && k == n / 2; }

template <typename Scalar = double>
AxisVector<Scalar> frequencyAxis(Eigen::Index n) {
  AxisVector<Scalar> w(n);
  const Scalar step = Scalar(2) * std::numbers::pi_v<Scalar> / static_cast<Scalar>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index signedK = (2 * k < n) ? k : k - n;
    w(k) = step * static_cast<Scalar>(signedK);
  }
  return w;
}

/// |w|^2 on an H x W grid.
template <typename Scalar = double>
Grid<Scalar> squaredFrequency(Eigen::Index height, Eigen::Index width) {
  const AxisVector<Scalar> wy = frequencyAxis<Scalar>(height).square();
  const AxisVector<Scalar> wx = frequencyAxis<Scalar>(width).square();
  return wy.replicate(1, width) + wx.transpose().replicate(height, 1);
}

/// exp(i w t) along one axis, with first and second derivatives in t.
template <typename Scalar>
struct AxisPhase {
  AxisVector<std::complex<Scalar>> value;
  AxisVector<std::complex<Scalar>> d1;
  AxisVector<std::complex<Scalar>> d2;
};

template <typename Scalar = double>
AxisPhase<Scalar> axisPhase(Eigen::Index n, Scalar t) {
  using C = std::complex<Scalar>;
  const AxisVector<Scalar> w = frequencyAxis<Scalar>(n);
  AxisPhase<Scalar> p{AxisVector<C>(n), AxisVector<C>(n), AxisVector<C>(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    if (isNyquistBin(k, n)) {
      const Scalar pi = std::numbers::pi_v<Scalar>;
      p.value(k) = C(std::cos(pi * t), 0);
      p.d1(k) = C(-pi * std::sin(pi * t), 0);
      p.d2(k) = C(-pi * pi * std::cos(pi * t), 0);
    } else {
      const C e = std::polar(Scalar(1), w(k) * t);
      p.value(k) = e;
      p.d1(k) = C(0, w(k)) * e;
      p.d2(k) = -w(k) * w(k) * e;
    }
  }
  return p;
}

/// exp(i w.t) over the full grid (the unshift phase; B(t)^T in the Fourier domain).
template <typename Scalar = double>
SpectrumOf<Scalar> unshiftPhase(Eigen::Index height, Eigen::Index width, const Eigen::Matrix<Scalar, 2, 1>& t) {
  const auto py = axisPhase<Scalar>(height, t.y()).value;
  const auto px = axisPhase<Scalar>(width, t.x()).value;
  return (py.matrix() * px.matrix().transpose()).array();
}

namespace detail {

template <typename Scalar>
Eigen::FFT<Scalar>& fftEngine() {
  thread_local Eigen::FFT<Scalar> engine = [] {
    Eigen::FFT<Scalar> e;
    e.SetFlag(Eigen::FFT<Scalar>::Unscaled);
    return e;
  }();
  return engine;
}

template <typename Scalar>
void transform2d(SpectrumOf<Scalar>& data, bool inverse) {
  using C = std::complex<Scalar>;
  auto& fft = fftEngine<Scalar>();
  const Eigen::Index h = data.rows();
  const Eigen::Index w = data.cols();
  std::vector<C> in(static_cast<std::size_t>(std::max(h, w)));
  std::vector<C> out(in.size());
  for (Eigen::Index r = 0; r < h; ++r) {
    std::copy_n(data.row(r).data(), w, in.begin());
    if (inverse) fft.inv(out.data(), in.data(), w);
    else fft.fwd(out.data(), in.data(), w);
    std::copy_n(out.begin(), w, data.row(r).data());
  }
  for (Eigen::Index c = 0; c < w; ++c) {
    for (Eigen::Index r = 0; r < h; ++r) in[r] = data(r, c);
    if (inverse) fft.inv(out.data(), in.data(), h);
    else fft.fwd(out.data(), in.data(), h);
    for (Eigen::Index r = 0; r < h; ++r) data(r, c) = out[r];
  }
  data *= Scalar(1) / std::sqrt(static_cast<Scalar>(h * w));
}

}  // namespace detail

template <typename Derived>
SpectrumOf<typename Derived::Scalar> forwardTransform(const Eigen::ArrayBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  const Grid<Scalar> grid = g;
  requireValidGrid(grid, "forwardTransform");
  SpectrumOf<Scalar> s = grid.template cast<std::complex<Scalar>>();
  detail::transform2d(s, false);
  return s;
}

template <typename Derived>
SpectrumOf<typename Eigen::NumTraits<typename Derived::Scalar>::Real> inverseTransformComplex(
    const Eigen::ArrayBase<Derived>& s) {
  SpectrumOf<typename Eigen::NumTraits<typename Derived::Scalar>::Real> g = s;
  detail::transform2d(g, true);
  return g;
}

/// Real part of the inverse transform.
template <typename Derived>
Grid<typename Eigen::NumTraits<typename Derived::Scalar>::Real> inverseTransform(const Eigen::ArrayBase<Derived>& s) {
  return inverseTransformComplex(s).real();
}

template <typename DerivedS, typename DerivedT>
SpectrumOf<typename Eigen::NumTraits<typename DerivedS::Scalar>::Real> applyShift(const Eigen::ArrayBase<DerivedS>& s,
                                                                                 const Eigen::MatrixBase<DerivedT>& t) {
  using Real = typename Eigen::NumTraits<typename DerivedS::Scalar>::Real;
  const Eigen::Matrix<Real, 2, 1> shift = t;
  requireFinite(shift, "applyShift");
  return s * unshiftPhase<Real>(s.rows(), s.cols(), Eigen::Matrix<Real, 2, 1>(-shift));
}

/// Adjoint of applyShift, i.e. applyShift(s, -t).
template <typename DerivedS, typename DerivedT>
SpectrumOf<typename Eigen::NumTraits<typename DerivedS::Scalar>::Real> adjointUnshift(
    const Eigen::ArrayBase<DerivedS>& s, const Eigen::MatrixBase<DerivedT>& t) {
  using Real = typename Eigen::NumTraits<typename DerivedS::Scalar>::Real;
  const Eigen::Matrix<Real, 2, 1> shift = t;
  requireFinite(shift, "adjointUnshift");
  return s * unshiftPhase<Real>(s.rows(), s.cols(), shift);
}

/// Circular roll by integer (dx, dy): out(r, c) = g(r - dy, c - dx).
template <typename Scalar>
Grid<Scalar> circularRoll(const Grid<Scalar>& g, Eigen::Index dx, Eigen::Index dy) {
  const Eigen::Index h = g.rows();
  const Eigen::Index w = g.cols();
  Grid<Scalar> out(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    const Eigen::Index sr = ((r - dy) % h + h) % h;
    for (Eigen::Index c = 0; c < w; ++c) {
      out(r, c) = g(sr, ((c - dx) % w + w) % w);
    }
  }
  return out;
}

/// Spatial-domain Shannon shift by t. Integer shifts are exact rolls.
template <typename Scalar>
Grid<Scalar> shiftGrid(const Grid<Scalar>& g, const Eigen::Matrix<Scalar, 2, 1>& t) {
  if (std::rint(t.x()) == t.x() && std::rint(t.y()) == t.y()) {
    return circularRoll(g, static_cast<Eigen::Index>(t.x()), static_cast<Eigen::Index>(t.y()));
  }
  return inverseTransform(applyShift(forwardTransform(g), t));
}

/// Stationary Gaussian image prior with power S(w) = amplitude / |w|^2 and
/// additive noise variance noiseVariance. The DC power is never formed.
struct PriorSpectrum {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  double amplitude = 1.0;
  double noiseVariance = 1.0;

  /// S(w) for a non-DC frequency index.
  double power(Eigen::Index ky, Eigen::Index kx) const {
    const double wy = frequencyAxis(height)(ky);
    const double wx = frequencyAxis(width)(kx);
    return amplitude / (wy * wy + wx * wx);
  }
};

/// S / (frames * S + sigma2). S = +inf gives the 1/frames limit.
inline double wienerWeight(double power, double sigma2, int frames) {
  if (std::isinf(power)) return 1.0 / frames;
  return power / (frames * power + sigma2);
}

/// Wiener filter for `frames` = K+1 observations. Written as
/// a / (frames*a + sigma2*|w|^2), which equals S/(frames*S + sigma2) off DC
/// and takes its limit 1/frames at DC.
template <typename Scalar = double>
Grid<Scalar> wienerFilter(const PriorSpectrum& prior, int frames) {
  if (!(prior.noiseVariance > 0.0)) throw InvalidInput("wienerFilter: noise variance must be positive");
  if (!(prior.amplitude > 0.0) || !std::isfinite(prior.amplitude)) {
    throw InvalidInput("wienerFilter: prior amplitude must be positive and finite");
  }
  if (frames < 1) throw InvalidInput("wienerFilter: need at least one frame");
  const Grid<Scalar> w2 = squaredFrequency<Scalar>(prior.height, prior.width);
  const Scalar a = static_cast<Scalar>(prior.amplitude);
  return a / (static_cast<Scalar>(frames) * a + static_cast<Scalar>(prior.noiseVariance) * w2);
}

struct PriorFit {
  double amplitude = 0.0;
  /// Set when no image power is detectable above the noise floor.
  bool degenerate = false;
};

/// Least-squares fit of a in mean|z(w)|^2 - sigma2 ~ a/|w|^2 over non-DC bins.
/// The result is clamped to a_min = 1e-8 * mean observed power. A fit that is
/// not at least three standard errors above zero is reported as degenerate
/// and clamped as well.
inline PriorFit fitPriorAmplitude(std::span<const Spectrum> stack, double sigma2) {
  if (stack.empty()) throw InvalidInput("fitPriorAmplitude: empty stack");
  if (!(sigma2 >= 0.0)) throw InvalidInput("fitPriorAmplitude: negative noise variance");
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index w = stack.front().cols();
  Grid<double> meanPower = Grid<double>::Zero(h, w);
  for (const auto& s : stack) {
    if (s.rows() != h || s.cols() != w) throw InvalidInput("fitPriorAmplitude: dimension mismatch");
    meanPower += s.abs2();
  }
  meanPower /= static_cast<double>(stack.size());

  Grid<double> inv = 1.0 / squaredFrequency(h, w);
  inv(0, 0) = 0.0;
  const double sumInv2 = inv.square().sum();
  const double fitted = (inv * (meanPower - sigma2)).sum() / sumInv2;
  // Per-bin variance of a mean of K+1 exponential |z|^2 values is sigma2^2/(K+1).
  const double stdErr = sigma2 / std::sqrt(static_cast<double>(stack.size()) * sumInv2);

  double floor = 1e-8 * meanPower.mean();
  if (!(floor > 0.0)) floor = sigma2 > 0.0 ? 1e-8 * sigma2 : std::numeric_limits<double>::min();

  PriorFit fit;
  if (!(fitted > 3.0 * stdErr) || fitted < floor) {
    fit.amplitude = floor;
    fit.degenerate = true;
  } else {
    fit.amplitude = fitted;
  }
  return fit;
}

inline PriorSpectrum makePrior(Eigen::Index height, Eigen::Index width, double amplitude, double sigma2) {
  return PriorSpectrum{height, width, amplitude, sigma2};
}

}  // namespace shiftbench

#endif  // SHIFTBENCH_SPECTRAL_HPP
