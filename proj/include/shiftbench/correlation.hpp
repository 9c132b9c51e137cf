#ifndef SHIFTBENCH_CORRELATION_HPP
#define SHIFTBENCH_CORRELATION_HPP

#include "shiftbench/types.hpp"

namespace shiftbench {

/// Value, gradient and Hessian of the band-limited correlation
/// C(t) = Re sum_w X(w) exp(i w.t) at a continuous shift t.
struct CorrelationDerivatives {
  double value = 0.0;
  Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
};

CorrelationDerivatives correlationDerivatives(const Spectrum& cross, const Shift2D& t);

double correlationValue(const Spectrum& cross, const Shift2D& t);

struct PeakEstimate {
  /// Canonical representative in (-W/2, W/2] x (-H/2, H/2].
  Shift2D shift = Shift2D::Zero();
  double value = 0.0;
  /// The cross spectrum was identically zero; shift is (0, 0).
  bool degenerate = false;
  /// Newton was abandoned at the integer peak in favour of a 3-point parabola.
  bool parabolicFallback = false;
};

/// Integer argmax of C over the grid (lowest row-major index on ties),
/// refined by at most newtonIters Newton steps on the continuous C.
PeakEstimate locateCorrelationPeak(const Spectrum& cross, int newtonIters = 10);

}  // namespace shiftbench

#endif  // SHIFTBENCH_CORRELATION_HPP
