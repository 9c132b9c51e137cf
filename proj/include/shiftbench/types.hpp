#ifndef SHIFTBENCH_TYPES_HPP
#define SHIFTBENCH_TYPES_HPP

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace shiftbench {

/// Row-major H x W sample array. Arrays rather than matrices because almost
/// every operation on images and spectra is coefficient-wise.
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using SpectrumOf = Grid<std::complex<Scalar>>;

using PixelGrid = Grid<double>;
using Spectrum = SpectrumOf<double>;

/// (tx, ty) in pixels; tx moves content along columns, ty along rows.
using Shift2D = Eigen::Vector2d;

/// K+1 translations, one per row as (tx, ty). Row 0 is the reference frame
/// and is pinned to (0, 0).
using ShiftSet = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NoSolution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
void requireFinite(const Eigen::DenseBase<Derived>& values, const std::string& what) {
  if (!values.derived().allFinite()) {
    throw InvalidInput(what + ": non-finite values");
  }
}

template <typename Scalar>
void requireValidGrid(const Grid<Scalar>& g, const std::string& what) {
  if (g.rows() < 2 || g.cols() < 2) {
    throw InvalidInput(what + ": grids must be at least 2x2");
  }
  requireFinite(g, what);
}

/// Maps v onto the canonical representative in (-n/2, n/2].
inline double wrapToHalfOpen(double v, double n) {
  double q = std::fmod(n / 2.0 - v, n);
  if (q < 0.0) q += n;
  return n / 2.0 - q;
}

/// Canonical representative of a shift on an H x W periodic grid.
inline Shift2D wrapShift(const Shift2D& t, Eigen::Index height, Eigen::Index width) {
  return {wrapToHalfOpen(t.x(), static_cast<double>(width)),
          wrapToHalfOpen(t.y(), static_cast<double>(height))};
}

inline ShiftSet zeroShifts(Eigen::Index frames) { return ShiftSet::Zero(frames, 2); }

}  // namespace shiftbench

#endif  // SHIFTBENCH_TYPES_HPP
