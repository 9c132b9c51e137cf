#include "shiftbench/estimators.hpp"

#include <cmath>
#include <random>

#include "shiftbench/correlation.hpp"

namespace shiftbench {

std::string toString(Method m) { return m == Method::Mle ? "mle" : "map"; }
std::string toString(Optimizer o) { return o == Optimizer::Ccd ? "ccd" : "vp"; }
std::string toString(Init i) { return i == Init::Pairwise ? "pairwise" : "random"; }

void EstimatorConfig::validate() const {
  if (!(shiftTol > 0.0)) throw InvalidInput("EstimatorConfig: shiftTol must be > 0");
  if (maxOuterIters < 1) throw InvalidInput("EstimatorConfig: maxOuterIters must be >= 1");
  if (newtonIters < 0) throw InvalidInput("EstimatorConfig: newtonIters must be >= 0");
  if (!(randomInitHalfRange >= 0.0)) throw InvalidInput("EstimatorConfig: randomInitHalfRange must be >= 0");
}

namespace {

// |P(tau)| = |cos(pi t)| on these bins, so they would make the self-energy
// of each frame depend on its own shift.
Grid<double> withoutNyquist(Grid<double> w) {
  if (isNyquistBin(w.rows() / 2, w.rows())) w.row(w.rows() / 2).setZero();
  if (isNyquistBin(w.cols() / 2, w.cols())) w.col(w.cols() / 2).setZero();
  return w;
}

}  // namespace

CostWeights CostWeights::identity(Eigen::Index height, Eigen::Index width) {
  return CostWeights{withoutNyquist(Grid<double>::Ones(height, width)), true};
}

CostWeights CostWeights::wiener(const PriorSpectrum& prior, int frames) {
  return CostWeights{withoutNyquist(wienerFilter(prior, frames)), false};
}

std::vector<Spectrum> toSpectra(std::span<const PixelGrid> frames) {
  std::vector<Spectrum> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    if (!out.empty() && (f.rows() != out.front().rows() || f.cols() != out.front().cols())) {
      throw InvalidInput("toSpectra: frame size mismatch");
    }
    out.push_back(forwardTransform(f));
  }
  return out;
}

namespace {

void checkStack(std::span<const Spectrum> stack, const ShiftSet* shifts, const CostWeights& w) {
  if (stack.empty()) throw InvalidInput("empty stack");
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index wd = stack.front().cols();
  for (const auto& s : stack) {
    if (s.rows() != h || s.cols() != wd) throw InvalidInput("stack frames differ in size");
  }
  if (w.weights.rows() != h || w.weights.cols() != wd) throw InvalidInput("weights do not match frame size");
  if (shifts && shifts->rows() != static_cast<Eigen::Index>(stack.size())) {
    throw InvalidInput("shift count does not match frame count");
  }
}

/// Per-frame separable unshift phases and their derivatives.
struct FramePhase {
  AxisPhase<double> x;
  AxisPhase<double> y;

  FramePhase(Eigen::Index h, Eigen::Index w, const Shift2D& t) : x(axisPhase(w, t.x())), y(axisPhase(h, t.y())) {}

  Spectrum value() const { return (y.value.matrix() * x.value.matrix().transpose()).array(); }
};

Spectrum unshiftedSum(std::span<const Spectrum> stack, const ShiftSet& shifts) {
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index w = stack.front().cols();
  Spectrum m = Spectrum::Zero(h, w);
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    m += stack[i] * FramePhase(h, w, shifts.row(idx).transpose()).value();
  }
  return m;
}

double weightedEnergy(const Spectrum& m, const CostWeights& w) { return (w.weights * m.abs2()).sum(); }

Eigen::Vector2d frameGradient(const Spectrum& z, const Spectrum& m, const CostWeights& w, const FramePhase& p) {
  const Eigen::MatrixXcd y = (w.weights * m.conjugate() * z).matrix();
  const Eigen::VectorXcd vx0 = y * p.x.value.matrix();
  const Eigen::VectorXcd vx1 = y * p.x.d1.matrix();
  return {2.0 * (p.y.value * vx1.array()).sum().real(), 2.0 * (p.y.d1 * vx0.array()).sum().real()};
}

/// 2x2 diagonal block of the Hessian of E for one frame.
Eigen::Matrix2d frameHessian(const Spectrum& z, const Spectrum& m, const CostWeights& w, const FramePhase& p) {
  const Spectrum dx = (p.y.value.matrix() * p.x.d1.matrix().transpose()).array();
  const Spectrum dy = (p.y.d1.matrix() * p.x.value.matrix().transpose()).array();
  const Spectrum dxx = (p.y.value.matrix() * p.x.d2.matrix().transpose()).array();
  const Spectrum dyy = (p.y.d2.matrix() * p.x.value.matrix().transpose()).array();
  const Spectrum dxy = (p.y.d1.matrix() * p.x.d1.matrix().transpose()).array();
  const Grid<double> a = w.weights * z.abs2();
  const Spectrum b = w.weights * m.conjugate() * z;
  Eigen::Matrix2d hess;
  hess(0, 0) = 2.0 * ((a * dx.abs2()).sum() + (b * dxx).sum().real());
  hess(1, 1) = 2.0 * ((a * dy.abs2()).sum() + (b * dyy).sum().real());
  hess(0, 1) = hess(1, 0) = 2.0 * ((a.cast<std::complex<double>>() * dx.conjugate() * dy).sum().real() +
                                   (b * dxy).sum().real());
  return hess;
}

ShiftSet initialShifts(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const CostWeights& w,
                       bool& degenerate) {
  const int k = static_cast<int>(stack.size()) - 1;
  if (cfg.init == Init::Random) return randomInit(k, cfg.randomInitHalfRange, cfg.seed);
  PairwiseResult pw = pairwiseAlign(stack, w, cfg.newtonIters);
  degenerate = pw.degenerate;
  return pw.shifts;
}

}  // namespace

double commonCost(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w) {
  checkStack(stack, &shifts, w);
  return weightedEnergy(unshiftedSum(stack, shifts), w);
}

Eigen::VectorXd commonCostGradient(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w) {
  checkStack(stack, &shifts, w);
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index wd = stack.front().cols();
  const Spectrum m = unshiftedSum(stack, shifts);
  const Eigen::Index k = shifts.rows() - 1;
  Eigen::VectorXd g(2 * k);
  for (Eigen::Index i = 1; i <= k; ++i) {
    g.segment<2>(2 * (i - 1)) = frameGradient(stack[i], m, w, FramePhase(h, wd, shifts.row(i).transpose()));
  }
  return g;
}

PairwiseResult pairwiseAlign(std::span<const Spectrum> stack, const CostWeights& w, int newtonIters) {
  checkStack(stack, nullptr, w);
  if (stack.size() < 2) throw InvalidInput("pairwiseAlign: need at least two frames");
  PairwiseResult result{zeroShifts(static_cast<Eigen::Index>(stack.size())), false};
  const Spectrum reference = stack.front().conjugate();
  for (std::size_t i = 1; i < stack.size(); ++i) {
    const PeakEstimate peak = locateCorrelationPeak(w.weights * stack[i] * reference, newtonIters);
    result.shifts.row(static_cast<Eigen::Index>(i)) = peak.shift.transpose();
    result.degenerate = result.degenerate || peak.degenerate;
  }
  return result;
}

ShiftSet randomInit(int k, double halfRange, std::uint64_t seed) {
  if (k < 0) throw InvalidInput("randomInit: k must be non-negative");
  if (!(halfRange >= 0.0)) throw InvalidInput("randomInit: halfRange must be non-negative");
  ShiftSet shifts = zeroShifts(k + 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-halfRange, halfRange);
  for (int i = 1; i <= k; ++i) {
    shifts(i, 0) = u(rng);
    shifts(i, 1) = u(rng);
  }
  return shifts;
}

EstimateResult optimizeCcd(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const CostWeights& w) {
  cfg.validate();
  checkStack(stack, nullptr, w);
  if (stack.size() < 2) throw InvalidInput("optimizeCcd: need K >= 1");
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index wd = stack.front().cols();
  const auto frames = static_cast<Eigen::Index>(stack.size());

  EstimateResult res;
  res.shifts = initialShifts(stack, cfg, w, res.degenerate);

  // `running` always equals the unshifted sum at the current shifts; it is the
  // state whose cost must never decrease.
  Spectrum running = unshiftedSum(stack, res.shifts);
  double cost = weightedEnergy(running, w);
  res.costHistory.push_back(cost);

  for (int iter = 1; iter <= cfg.maxOuterIters; ++iter) {
    // (a) the latent estimate is frozen for the whole sweep
    const Spectrum reference = (w.weights * running).conjugate();
    double maxChange = 0.0;
    // (b) re-register each frame against it
    for (Eigen::Index i = 1; i < frames; ++i) {
      const Spectrum cross = stack[i] * reference;
      const Shift2D current = res.shifts.row(i).transpose();
      const PeakEstimate peak = locateCorrelationPeak(cross, cfg.newtonIters);
      if (peak.degenerate || !(peak.value > correlationValue(cross, current))) continue;

      const Spectrum delta = stack[i] * (FramePhase(h, wd, peak.shift).value() - FramePhase(h, wd, current).value());
      const Spectrum trial = running + delta;
      const double trialCost = weightedEnergy(trial, w);
      if (trialCost < cost) continue;

      maxChange = std::max(maxChange, wrapShift(peak.shift - current, h, wd).norm());
      res.shifts.row(i) = peak.shift.transpose();
      running = trial;
      cost = trialCost;
    }
    res.iterations = iter;
    res.costHistory.push_back(cost);
    if (maxChange < cfg.shiftTol) {
      res.converged = true;
      break;
    }
  }
  res.finalCost = cost;
  return res;
}

EstimateResult optimizeVp(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const CostWeights& w) {
  cfg.validate();
  checkStack(stack, nullptr, w);
  if (stack.size() < 2) throw InvalidInput("optimizeVp: need K >= 1");
  const Eigen::Index h = stack.front().rows();
  const Eigen::Index wd = stack.front().cols();
  const Eigen::Index k = static_cast<Eigen::Index>(stack.size()) - 1;
  const Eigen::Index n = 2 * k;

  EstimateResult res;
  res.shifts = initialShifts(stack, cfg, w, res.degenerate);

  auto toVector = [&](const ShiftSet& s) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 1; i <= k; ++i) x.segment<2>(2 * (i - 1)) = s.row(i).transpose();
    return x;
  };
  auto toShifts = [&](const Eigen::VectorXd& x) {
    ShiftSet s = zeroShifts(k + 1);
    for (Eigen::Index i = 1; i <= k; ++i) s.row(i) = x.segment<2>(2 * (i - 1)).transpose();
    return s;
  };

  // Work on f = -E so the textbook BFGS minimisation form applies.
  Eigen::VectorXd x = toVector(res.shifts);
  double f = -commonCost(stack, res.shifts, w);
  Eigen::VectorXd g = -commonCostGradient(stack, res.shifts, w);
  res.costHistory.push_back(-f);

  // Initial inverse Hessian from the exact per-frame 2x2 blocks of -E''.
  Eigen::MatrixXd initialInverse = Eigen::MatrixXd::Zero(n, n);
  {
    const Spectrum m = unshiftedSum(stack, res.shifts);
    for (Eigen::Index i = 1; i <= k; ++i) {
      const Eigen::Matrix2d block = -frameHessian(stack[i], m, w, FramePhase(h, wd, res.shifts.row(i).transpose()));
      Eigen::Matrix2d inv = Eigen::Matrix2d::Identity();
      if (block(0, 0) > 0.0 && block.determinant() > 0.0) {
        inv = block.inverse();
      } else {
        const double scale = std::max(block.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        inv /= scale;
      }
      initialInverse.block<2, 2>(2 * (i - 1), 2 * (i - 1)) = inv;
    }
  }
  Eigen::MatrixXd hInv = initialInverse;

  constexpr double kArmijo = 1e-4;
  for (int iter = 1; iter <= cfg.maxOuterIters; ++iter) {
    Eigen::VectorXd p = -hInv * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      hInv = initialInverse;
      p = -hInv * g;
      slope = g.dot(p);
      if (!(slope < 0.0)) {
        res.converged = true;
        break;
      }
    }
    // cap any single coordinate move at one pixel
    const double longest = p.cwiseAbs().maxCoeff();
    if (longest > 1.0) {
      p /= longest;
      slope /= longest;
    }

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd xNew;
    double fNew = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      xNew = x + alpha * p;
      fNew = -commonCost(stack, toShifts(xNew), w);
      if (fNew <= f + kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No ascent direction left at working precision.
      res.converged = true;
      break;
    }

    const Eigen::VectorXd gNew = -commonCostGradient(stack, toShifts(xNew), w);
    const Eigen::VectorXd s = xNew - x;
    const Eigen::VectorXd y = gNew - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      hInv = left * hInv * left.transpose() + rho * s * s.transpose();
    }
    x = xNew;
    f = fNew;
    g = gNew;
    res.iterations = iter;
    res.costHistory.push_back(-f);

    double maxChange = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) maxChange = std::max(maxChange, s.segment<2>(2 * i).norm());
    if (maxChange < cfg.shiftTol) {
      res.converged = true;
      break;
    }
  }

  res.shifts = toShifts(x);
  for (Eigen::Index i = 1; i <= k; ++i) res.shifts.row(i) = wrapShift(res.shifts.row(i).transpose(), h, wd).transpose();
  res.finalCost = -f;
  return res;
}

EstimateResult estimateMleCcd(std::span<const Spectrum> stack, EstimatorConfig cfg) {
  if (stack.empty()) throw InvalidInput("estimateMleCcd: empty stack");
  cfg.method = Method::Mle;
  cfg.optimizer = Optimizer::Ccd;
  return optimizeCcd(stack, cfg, CostWeights::identity(stack.front().rows(), stack.front().cols()));
}

EstimateResult estimateMleVp(std::span<const Spectrum> stack, EstimatorConfig cfg) {
  if (stack.empty()) throw InvalidInput("estimateMleVp: empty stack");
  cfg.method = Method::Mle;
  cfg.optimizer = Optimizer::Vp;
  return optimizeVp(stack, cfg, CostWeights::identity(stack.front().rows(), stack.front().cols()));
}

EstimateResult estimateMap(std::span<const Spectrum> stack, const EstimatorConfig& cfg, const PriorSpectrum& prior) {
  if (stack.empty()) throw InvalidInput("estimateMap: empty stack");
  if (prior.height != stack.front().rows() || prior.width != stack.front().cols()) {
    throw InvalidInput("estimateMap: prior does not match frame size");
  }
  const CostWeights w = CostWeights::wiener(prior, static_cast<int>(stack.size()));
  return cfg.optimizer == Optimizer::Ccd ? optimizeCcd(stack, cfg, w) : optimizeVp(stack, cfg, w);
}

EstimateResult estimate(std::span<const Spectrum> stack, const EstimatorConfig& cfg,
                        const std::optional<PriorSpectrum>& prior) {
  if (cfg.method == Method::Map) {
    if (!prior) throw InvalidInput("estimate: MAP requires a prior");
    return estimateMap(stack, cfg, *prior);
  }
  return cfg.optimizer == Optimizer::Ccd ? estimateMleCcd(stack, cfg) : estimateMleVp(stack, cfg);
}

PixelGrid reconstructLatent(std::span<const Spectrum> stack, const ShiftSet& shifts, const CostWeights& w) {
  checkStack(stack, &shifts, w);
  const Spectrum m = unshiftedSum(stack, shifts);
  if (w.uniform) return inverseTransform(m / static_cast<double>(stack.size()));
  return inverseTransform(w.weights * m);
}

}  // namespace shiftbench
