#ifndef SHIFTBENCH_SYNTH_HPP
#define SHIFTBENCH_SYNTH_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "shiftbench/types.hpp"

namespace shiftbench {

struct TrajectoryModel {
  enum class Kind { IidUniform, Drift };

  Kind kind = Kind::IidUniform;
  /// iid-uniform: each component ~ U[-halfRange, halfRange].
  double halfRange = 2.0;
  /// drift: per-frame speed ~ N(speedMean, speedStd^2) truncated at 0,
  /// heading random walk with N(0, angleStd^2) increments.
  double speedMean = 0.5;
  double speedStd = 0.1;
  double angleStd = 0.3;
  /// Initial heading; drawn uniformly on [0, 2pi) when empty.
  std::optional<double> initialAngle;

  static TrajectoryModel iid(double halfRange);
  static TrajectoryModel drift(double speedMean, double speedStd, double angleStd);

  void validate() const;
};

struct SyntheticStack {
  PixelGrid truth;
  std::vector<PixelGrid> frames;
  ShiftSet trueShifts;
  double sigma2 = 0.0;
  /// +inf for noiseless stacks.
  double snrDb = 0.0;
};

/// K+1 shifts with row 0 pinned to (0, 0). Deterministic in seed.
ShiftSet drawShifts(const TrajectoryModel& model, int k, std::uint64_t seed);

/// frame i = Shannon shift of truth by shifts[i] plus N(0, sigma2) white noise.
SyntheticStack makeStack(const PixelGrid& truth, const ShiftSet& shifts, double sigma2, std::uint64_t seed);

/// Total gradient energy sum |w|^2 |U(w)|^2 of a grid.
double gradientEnergy(const PixelGrid& truth);

/// 10 log10(gradient energy / (N sigma2)); -inf for constant images.
double measureSnrDb(const PixelGrid& truth, double sigma2);

/// Noise variance that puts measureSnrDb(truth, .) at targetDb.
double sigma2ForSnrDb(const PixelGrid& truth, double targetDb);

/// Periodic component of the periodic-plus-smooth decomposition.
PixelGrid periodicComponent(const PixelGrid& g);

/// Zero-mean periodic component with every bin above cutoff * pi removed,
/// which also clears Nyquist rows and columns.
PixelGrid prepareTruth(const PixelGrid& g, double cutoff = 0.9);

/// Stable 64-bit mixing of a seed with further integer keys.
std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t value);

}  // namespace shiftbench

#endif  // SHIFTBENCH_SYNTH_HPP
