#include "shiftbench/synth.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "shiftbench/spectral.hpp"

namespace shiftbench {

TrajectoryModel TrajectoryModel::iid(double halfRange) {
  TrajectoryModel m;
  m.kind = Kind::IidUniform;
  m.halfRange = halfRange;
  return m;
}

TrajectoryModel TrajectoryModel::drift(double speedMean, double speedStd, double angleStd) {
  TrajectoryModel m;
  m.kind = Kind::Drift;
  m.speedMean = speedMean;
  m.speedStd = speedStd;
  m.angleStd = angleStd;
  return m;
}

void TrajectoryModel::validate() const {
  if (kind == Kind::IidUniform && !(halfRange > 0.0)) throw InvalidInput("trajectory: halfRange must be > 0");
  if (kind == Kind::Drift && !(speedMean >= 0.0 && speedStd >= 0.0 && angleStd >= 0.0)) {
    throw InvalidInput("trajectory: drift parameters must be non-negative");
  }
}

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t value) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double normalDraw(std::mt19937_64& rng, double mean, double stddev) {
  if (stddev == 0.0) return mean;
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace

ShiftSet drawShifts(const TrajectoryModel& model, int k, std::uint64_t seed) {
  if (k < 1) throw InvalidInput("drawShifts: k must be >= 1");
  model.validate();
  std::mt19937_64 rng(seed);
  ShiftSet shifts = zeroShifts(k + 1);
  if (model.kind == TrajectoryModel::Kind::IidUniform) {
    std::uniform_real_distribution<double> u(-model.halfRange, model.halfRange);
    for (int i = 1; i <= k; ++i) {
      shifts(i, 0) = u(rng);
      shifts(i, 1) = u(rng);
    }
    return shifts;
  }

  double heading = model.initialAngle
                       ? *model.initialAngle
                       : std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  for (int i = 1; i <= k; ++i) {
    if (i > 1) heading += normalDraw(rng, 0.0, model.angleStd);
    double speed = normalDraw(rng, model.speedMean, model.speedStd);
    // truncation at zero by rejection; bounded so degenerate parameters terminate
    for (int attempt = 0; speed < 0.0 && attempt < 64; ++attempt) {
      speed = normalDraw(rng, model.speedMean, model.speedStd);
    }
    speed = std::max(speed, 0.0);
    shifts(i, 0) = shifts(i - 1, 0) + speed * std::cos(heading);
    shifts(i, 1) = shifts(i - 1, 1) + speed * std::sin(heading);
  }
  return shifts;
}

SyntheticStack makeStack(const PixelGrid& truth, const ShiftSet& shifts, double sigma2, std::uint64_t seed) {
  requireValidGrid(truth, "makeStack");
  if (shifts.rows() < 1) throw InvalidInput("makeStack: empty shift set");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InvalidInput("makeStack: sigma2 must be finite and >= 0");
  requireFinite(shifts, "makeStack");

  SyntheticStack stack;
  stack.truth = truth;
  stack.trueShifts = shifts;
  stack.sigma2 = sigma2;
  stack.snrDb = sigma2 > 0.0 ? measureSnrDb(truth, sigma2) : std::numeric_limits<double>::infinity();

  const Spectrum spectrum = forwardTransform(truth);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
  stack.frames.reserve(static_cast<std::size_t>(shifts.rows()));
  for (Eigen::Index i = 0; i < shifts.rows(); ++i) {
    const Shift2D t = shifts.row(i).transpose();
    PixelGrid frame = (std::rint(t.x()) == t.x() && std::rint(t.y()) == t.y())
                          ? circularRoll(truth, static_cast<Eigen::Index>(t.x()), static_cast<Eigen::Index>(t.y()))
                          : inverseTransform(applyShift(spectrum, t));
    if (sigma2 > 0.0) {
      for (Eigen::Index p = 0; p < frame.size(); ++p) frame(p) += noise(rng);
    }
    stack.frames.push_back(std::move(frame));
  }
  return stack;
}

double gradientEnergy(const PixelGrid& truth) {
  const Spectrum s = forwardTransform(truth);
  return (squaredFrequency(truth.rows(), truth.cols()) * s.abs2()).sum();
}

double measureSnrDb(const PixelGrid& truth, double sigma2) {
  if (!(sigma2 > 0.0)) throw InvalidInput("measureSnrDb: sigma2 must be positive");
  const double energy = gradientEnergy(truth);
  if (energy <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(energy / (static_cast<double>(truth.size()) * sigma2));
}

double sigma2ForSnrDb(const PixelGrid& truth, double targetDb) {
  if (!std::isfinite(targetDb)) throw InvalidInput("sigma2ForSnrDb: target must be finite");
  const double energy = gradientEnergy(truth);
  if (energy <= 0.0) throw NoSolution("sigma2ForSnrDb: constant image has no gradient energy");
  return energy / (static_cast<double>(truth.size()) * std::pow(10.0, targetDb / 10.0));
}

PixelGrid periodicComponent(const PixelGrid& g) {
  requireValidGrid(g, "periodicComponent");
  const Eigen::Index h = g.rows();
  const Eigen::Index w = g.cols();
  PixelGrid boundary = PixelGrid::Zero(h, w);
  boundary.row(0) += g.row(h - 1) - g.row(0);
  boundary.row(h - 1) += g.row(0) - g.row(h - 1);
  boundary.col(0) += g.col(w - 1) - g.col(0);
  boundary.col(w - 1) += g.col(0) - g.col(w - 1);

  Spectrum smooth = forwardTransform(boundary);
  const AxisVector<double> wy = frequencyAxis(h);
  const AxisVector<double> wx = frequencyAxis(w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const double denom = 2.0 * std::cos(wy(r)) + 2.0 * std::cos(wx(c)) - 4.0;
      smooth(r, c) = (r == 0 && c == 0) ? std::complex<double>(0.0) : smooth(r, c) / denom;
    }
  }
  return g - inverseTransform(smooth);
}

PixelGrid prepareTruth(const PixelGrid& g, double cutoff) {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw InvalidInput("prepareTruth: cutoff must be in (0, 1]");
  Spectrum s = forwardTransform(periodicComponent(g));
  const Grid<double> w2 = squaredFrequency(g.rows(), g.cols());
  const double limit = cutoff * std::numbers::pi;
  s = (w2 > limit * limit).select(std::complex<double>(0.0), s);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      if (isNyquistBin(r, g.rows()) || isNyquistBin(c, g.cols())) s(r, c) = 0.0;
    }
  }
  s(0, 0) = 0.0;
  return inverseTransform(s);
}

}  // namespace shiftbench
