#ifndef SHIFTBENCH_ESTIMATORS_HPP
#define SHIFTBENCH_ESTIMATORS_HPP

// Multi-frame translation estimators sharing one objective,
//
//   E(tau) = sum_w  W(w) |sum_i Z_i(w) exp(i w.tau_i)|^2 ,
//
// with W = 1 for maximum likelihood and W = Wiener filter for MAP / Bayesian
// ML (both optimise the same cost). Frame 0 is the reference: tau_0 = 0.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftbench/spectral.hpp"
#include "shiftbench/types.hpp"

namespace shiftbench {

enum class Method { Mle, Map };
enum class Optimizer { Ccd, Vp };
enum class Init { Random, Pairwise };

std::string toString(Method m);
std::string toString(Optimizer o);
std::string toString(Init i);

struct EstimatorConfig {
  Method method = Method::Mle;
  Optimizer optimizer = Optimizer::Ccd;
  Init init = Init::Pairwise;
  int maxOuterIters = 50;
  double shiftTol = 1e-4;
  int newtonIters = 10;
  double randomInitHalfRange = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-frequency weights of the common cost. The factories give the Nyquist
/// row and column (even sizes) zero weight.
struct CostWeights {
  Grid<double> weights;
  /// Unit weight on every other bin (maximum likelihood).
  bool uniform = true;

  static CostWeights identity(Eigen::Index height, Eigen::Index width);
  static CostWeights wiener(const PriorSpectrum& prior, int frames);
};

struct EstimateResult {
  ShiftSet shifts;
  int iterations = 0;
  double finalCost = 0.0;
  bool converged = false;
  /// Cost at the initial point followed by the cost after every accepted iteration.
  std::vector<double> costHistory;
  /// Initialisation met an all-zero frame.
  bool degenerate = false;
};

std::vector<Spectrum> toSpectra(std::span<const PixelGrid> frames);

double commonCost(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w);

/// dE/dtau for frames 1..K, laid out as (tx_1, ty_1, tx_2, ty_2, ...).
Eigen::VectorXd commonCostGradient(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w);

struct PairwiseResult {
  ShiftSet shifts;
  bool degenerate = false;
};

/// Each frame against frame 0 by weighted cross-correlation.
PairwiseResult pairwiseAlign(std::span<const Spectrum> stack, const CostWeights& w, int newtonIters = 10);

ShiftSet randomInit(int k, double halfRange, std::uint64_t seed);

/// Cyclic coordinate descent: average the unshifted frames, then re-register
/// every frame against that average; repeat.
EstimateResult optimizeCcd(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const CostWeights& w);

/// Variable projection: BFGS ascent of E over all 2K coordinates jointly.
EstimateResult optimizeVp(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const CostWeights& w);

EstimateResult estimateMleCcd(std::span<const Spectrum> stack, EstimatorConfig cfg);
EstimateResult estimateMleVp(std::span<const Spectrum> stack, EstimatorConfig cfg);

/// MAP and Bayesian ML: the optimiser named by cfg.optimizer on Wiener weights.
EstimateResult estimateMap(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const PriorSpectrum& prior);

/// Dispatch on cfg.method and cfg.optimizer. MAP needs a prior.
EstimateResult estimate(std::span<const Spectrum> stack, const EstimatorConfig& cfg,
                        const std::optional<PriorSpectrum>& prior = std::nullopt);

/// Pairwise shifts b_ij (frame j relative to frame i) for all i < j, ordered
/// (0,1), (0,2), ..., (0,K), (1,2), ...; one row per pair.
using PairwiseTable = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

inline Eigen::Index pairRow(Eigen::Index i, Eigen::Index j, Eigen::Index k) {
  // rows before block i: sum_{a<i} (K - a)
  return i * k - i * (i - 1) / 2 + (j - i - 1);
}

/// K(K+1)/2 x K incidence matrix: row (i, j) selects r_i ... r_{j-1}.
Eigen::MatrixXd adjacencyDesign(int k);

struct ConstrainedResult {
  ShiftSet shifts;
  /// r_i = tau_{i+1} - tau_i, one row per i.
  ShiftSet adjacent;
  PairwiseTable pairwise;
  /// Least-squares residual norm per axis.
  Eigen::Vector2d residual = Eigen::Vector2d::Zero();
};

/// Least-squares reconciliation of pairwise shifts through r_i + ... + r_{j-1} = b_ij.
ConstrainedResult solveAdjacentDisplacements(const PairwiseTable& pairwise, int k);

ConstrainedResult estimateConstrained(std::span<const Spectrum> stack, const CostWeights& w, int newtonIters = 10);

/// Average of the aligned frames (uniform weights) or its Wiener-filtered version.
PixelGrid reconstructLatent(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w);

/// sigma^2 from the MAD of diagonal first differences, pooled over frames.
double estimateNoiseVariance(std::span<const PixelGrid> frames);

}  // namespace shiftbench

#endif  // SHIFTBENCH_ESTIMATORS_HPP
