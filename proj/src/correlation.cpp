#include "shiftbench/correlation.hpp"

#include <algorithm>
#include <cmath>

#include "shiftbench/spectral.hpp"

namespace shiftbench {

CorrelationDerivatives correlationDerivatives(const Spectrum& cross, const Shift2D& t) {
  const auto px = axisPhase(cross.cols(), t.x());
  const auto py = axisPhase(cross.rows(), t.y());
  Eigen::MatrixXcd basis(cross.cols(), 3);
  basis << px.value.matrix(), px.d1.matrix(), px.d2.matrix();
  const Eigen::MatrixXcd v = cross.matrix() * basis;

  CorrelationDerivatives d;
  d.value = (py.value * v.col(0).array()).sum().real();
  d.gradient << (py.value * v.col(1).array()).sum().real(), (py.d1 * v.col(0).array()).sum().real();
  const double hxy = (py.d1 * v.col(1).array()).sum().real();
  d.hessian << (py.value * v.col(2).array()).sum().real(), hxy, hxy, (py.d2 * v.col(0).array()).sum().real();
  return d;
}

double correlationValue(const Spectrum& cross, const Shift2D& t) {
  const auto px = axisPhase(cross.cols(), t.x());
  const auto py = axisPhase(cross.rows(), t.y());
  const Eigen::VectorXcd v0 = cross.matrix() * px.value.matrix();
  return (py.value * v0.array()).sum().real();
}

namespace {

bool negativeDefinite(const Eigen::Matrix2d& h) {
  return h(0, 0) < 0.0 && h.determinant() > 0.0;
}

double parabolicOffset(double minus, double centre, double plus) {
  const double denom = minus - 2.0 * centre + plus;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (minus - plus) / denom, -0.5, 0.5);
}

}  // namespace

PeakEstimate locateCorrelationPeak(const Spectrum& cross, int newtonIters) {
  const Eigen::Index h = cross.rows();
  const Eigen::Index w = cross.cols();
  PeakEstimate peak;
  if ((cross.abs2() == 0.0).all()) {
    peak.degenerate = true;
    return peak;
  }

  const PixelGrid map = inverseTransformComplex(cross).real();
  Eigen::Index bestR = 0;
  Eigen::Index bestC = 0;
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      if (map(r, c) > map(bestR, bestC)) {
        bestR = r;
        bestC = c;
      }
    }
  }

  Shift2D t = wrapShift(Shift2D(static_cast<double>(bestC), static_cast<double>(bestR)), h, w);
  CorrelationDerivatives d = correlationDerivatives(cross, t);
  for (int it = 0; it < newtonIters; ++it) {
    if (!negativeDefinite(d.hessian)) {
      if (it == 0) {
        const double cm = map(bestR, (bestC + w - 1) % w);
        const double cp = map(bestR, (bestC + 1) % w);
        const double rm = map((bestR + h - 1) % h, bestC);
        const double rp = map((bestR + 1) % h, bestC);
        t += Shift2D(parabolicOffset(cm, map(bestR, bestC), cp), parabolicOffset(rm, map(bestR, bestC), rp));
        d = correlationDerivatives(cross, t);
        peak.parabolicFallback = true;
      }
      break;
    }
    Shift2D step = -d.hessian.ldlt().solve(d.gradient);
    if (step.norm() > 1.0) step /= step.norm();
    if (step.norm() < 1e-12) break;

    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      if (correlationValue(cross, t + step) >= d.value) {
        t += step;
        d = correlationDerivatives(cross, t);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || step.norm() < 1e-13) break;
  }

  peak.shift = wrapShift(t, h, w);
  peak.value = d.value;
  return peak;
}

}  // namespace shiftbench
