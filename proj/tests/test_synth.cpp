#include <gtest/gtest.h>

#include <numbers>

#include "shiftbench/synth.hpp"
#include "support.hpp"

using namespace shiftbench;
using namespace testing_support;

TEST(DrawShifts, GaugeAndLength) {
  for (const auto& model : {TrajectoryModel::iid(2.0), TrajectoryModel::drift(0.5, 0.1, 0.3)}) {
    const ShiftSet s = drawShifts(model, 1, 3);
    ASSERT_EQ(s.rows(), 2);
    EXPECT_EQ(s(0, 0), 0.0);
    EXPECT_EQ(s(0, 1), 0.0);
  }
  EXPECT_THROW(drawShifts(TrajectoryModel::iid(2.0), 0, 1), InvalidInput);
}

TEST(DrawShifts, IidUniformVariance) {
  const ShiftSet s = drawShifts(TrajectoryModel::iid(2.0), 100000, 4);
  const auto body = s.bottomRows(100000);
  EXPECT_LE(body.cwiseAbs().maxCoeff(), 2.0);
  for (int c = 0; c < 2; ++c) {
    const double mean = body.col(c).mean();
    const double var = (body.col(c).array() - mean).square().mean();
    EXPECT_NEAR(var / (4.0 / 3.0), 1.0, 0.05);
  }
}

TEST(DrawShifts, DegenerateDriftIsAStraightLine) {
  TrajectoryModel model = TrajectoryModel::drift(1.0, 0.0, 0.0);
  model.initialAngle = 0.0;
  const ShiftSet s = drawShifts(model, 6, 5);
  for (int i = 0; i <= 6; ++i) {
    EXPECT_EQ(s(i, 0), static_cast<double>(i));
    EXPECT_EQ(s(i, 1), 0.0);
  }
}

TEST(DrawShifts, DriftStepsFollowSpeedAndTurnSlowly) {
  TrajectoryModel model = TrajectoryModel::drift(0.5, 0.1, 0.05);
  const ShiftSet s = drawShifts(model, 2000, 6);
  double speed = 0.0;
  for (int i = 1; i <= 2000; ++i) speed += (s.row(i) - s.row(i - 1)).norm();
  EXPECT_NEAR(speed / 2000.0, 0.5, 0.02);

  // speed ~ N(0, 1) truncated at 0 is half-normal with mean sqrt(2/pi)
  const ShiftSet t = drawShifts(TrajectoryModel::drift(0.0, 1.0, 0.3), 20000, 7);
  const double halfNormal = (t.bottomRows(20000) - t.topRows(20000)).rowwise().norm().mean();
  EXPECT_NEAR(halfNormal / std::sqrt(2.0 / std::numbers::pi), 1.0, 0.03);
}

TEST(DrawShifts, RejectsInvalidModels) {
  EXPECT_THROW(drawShifts(TrajectoryModel::iid(0.0), 3, 1), InvalidInput);
  EXPECT_THROW(drawShifts(TrajectoryModel::drift(-1.0, 0.1, 0.1), 3, 1), InvalidInput);
  EXPECT_THROW(drawShifts(TrajectoryModel::drift(1.0, -0.1, 0.1), 3, 1), InvalidInput);
}

TEST(DrawShifts, SeededDeterminism) {
  const auto model = TrajectoryModel::drift(0.5, 0.1, 0.3);
  EXPECT_TRUE((drawShifts(model, 10, 42).array() == drawShifts(model, 10, 42).array()).all());
  EXPECT_FALSE((drawShifts(model, 10, 42).array() == drawShifts(model, 10, 43).array()).all());
}

TEST(MakeStack, NoiselessZeroShiftsCopyTruth) {
  const PixelGrid truth = bandLimitedTruth(20, 24, 1);
  const SyntheticStack s = makeStack(truth, zeroShifts(4), 0.0, 1);
  ASSERT_EQ(s.frames.size(), 4u);
  for (const auto& f : s.frames) EXPECT_TRUE((f == truth).all());
  EXPECT_TRUE(std::isinf(s.snrDb));
}

TEST(MakeStack, IntegerShiftIsRoll) {
  const PixelGrid truth = randomGrid(12, 12, 2);
  ShiftSet shifts = zeroShifts(2);
  shifts(1, 0) = 3.0;
  const SyntheticStack s = makeStack(truth, shifts, 0.0, 1);
  for (Eigen::Index r = 0; r < 12; ++r) {
    for (Eigen::Index c = 0; c < 12; ++c) EXPECT_EQ(s.frames[1](r, (c + 3) % 12), truth(r, c));
  }
}

TEST(MakeStack, NoiseVariance) {
  const PixelGrid truth = bandLimitedTruth(100, 100, 3);
  ShiftSet shifts = zeroShifts(2);
  shifts.row(1) << 0.3, -0.6;
  const SyntheticStack noisy = makeStack(truth, shifts, 0.25, 9);
  const SyntheticStack clean = makeStack(truth, shifts, 0.0, 9);
  for (int i = 0; i < 2; ++i) {
    const PixelGrid n = noisy.frames[i] - clean.frames[i];
    const double var = (n - n.mean()).square().mean();
    EXPECT_NEAR(var / 0.25, 1.0, 0.05);
  }
  EXPECT_NEAR(noisy.snrDb, measureSnrDb(truth, 0.25), 1e-12);
}

TEST(MakeStack, NoiselessFramesAreExactlyConsistent) {
  const PixelGrid truth = bandLimitedTruth(50, 50, 4);
  const ShiftSet shifts = drawShifts(TrajectoryModel::iid(2.0), 5, 8);
  const SyntheticStack s = makeStack(truth, shifts, 0.0, 1);
  const Spectrum u = forwardTransform(truth);
  for (int i = 0; i <= 5; ++i) {
    const Spectrum back = adjointUnshift(forwardTransform(s.frames[i]), Shift2D(shifts.row(i).transpose()));
    EXPECT_LT((back - u).abs().maxCoeff(), 1e-12 * u.abs().maxCoeff());
  }
}

TEST(MakeStack, SeededDeterminismAndValidation) {
  const PixelGrid truth = bandLimitedTruth(16, 16, 5);
  const ShiftSet shifts = drawShifts(TrajectoryModel::iid(2.0), 3, 8);
  const SyntheticStack a = makeStack(truth, shifts, 0.5, 77);
  const SyntheticStack b = makeStack(truth, shifts, 0.5, 77);
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_TRUE((a.frames[i] == b.frames[i]).all());
  EXPECT_THROW(makeStack(truth, shifts, -1.0, 1), InvalidInput);
  EXPECT_THROW(makeStack(PixelGrid::Zero(1, 5), shifts, 0.0, 1), InvalidInput);
  EXPECT_THROW(makeStack(truth, ShiftSet(0, 2), 0.0, 1), InvalidInput);
}

TEST(Snr, ConstantImageIsMinusInfinity) {
  EXPECT_EQ(measureSnrDb(PixelGrid::Constant(8, 8, 3.0), 1.0), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(measureSnrDb(PixelGrid::Constant(8, 8, 3.0), 0.0), InvalidInput);
  EXPECT_THROW(sigma2ForSnrDb(PixelGrid::Constant(8, 8, 3.0), 0.0), NoSolution);
}

TEST(Snr, TenfoldNoiseIsTenDecibels) {
  const PixelGrid truth = bandLimitedTruth(30, 30, 6);
  EXPECT_NEAR(measureSnrDb(truth, 0.1) - measureSnrDb(truth, 1.0), 10.0, 1e-9);
  double previous = std::numeric_limits<double>::infinity();
  for (double s2 : {1e-4, 1e-2, 1.0, 3.0, 100.0}) {
    const double db = measureSnrDb(truth, s2);
    EXPECT_LT(db, previous);
    previous = db;
  }
}

TEST(Snr, SinusoidGradientEnergyMatchesFiniteDifferences) {
  const Eigen::Index h = 64;
  const Eigen::Index w = 64;
  const double wx = 2.0 * std::numbers::pi / w;
  PixelGrid g(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) g(r, c) = std::sin(wx * c);
  }
  const double n = static_cast<double>(h * w);
  EXPECT_NEAR(gradientEnergy(g), wx * wx * n / 2.0, 1e-9 * n);

  double fd = 0.0;
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      const double dx = (g(r, (c + 1) % w) - g(r, (c + w - 1) % w)) / 2.0;
      const double dy = (g((r + 1) % h, c) - g((r + h - 1) % h, c)) / 2.0;
      fd += dx * dx + dy * dy;
    }
  }
  EXPECT_NEAR(gradientEnergy(g) / fd, 1.0, 0.02);
}

TEST(Snr, InverseRoundTrip) {
  const PixelGrid truth = bandLimitedTruth(50, 50, 7);
  EXPECT_NEAR(measureSnrDb(truth, sigma2ForSnrDb(truth, 0.0)), 0.0, 1e-9);
  EXPECT_NEAR(measureSnrDb(truth, sigma2ForSnrDb(truth, -13.7)), -13.7, 1e-9);
  const double s10 = sigma2ForSnrDb(truth, -10.0);
  const double s20 = sigma2ForSnrDb(truth, -20.0);
  EXPECT_NEAR(std::sqrt(s20 / s10), std::sqrt(10.0), 1e-9);
  EXPECT_NEAR(sigma2ForSnrDb(truth, 30.0) / (gradientEnergy(truth) / (2500.0 * 1e3)), 1.0, 1e-12);
}

TEST(Prepare, ZeroMeanBandLimitedAndNyquistFree) {
  const PixelGrid raw = randomGrid(50, 50, 8, 20.0) + 100.0;
  const PixelGrid p = prepareTruth(raw);
  const Spectrum s = forwardTransform(p);
  EXPECT_LT(std::abs(s(0, 0)), 1e-9);
  const Grid<double> f2 = squaredFrequency(50, 50);
  const double cut = 0.9 * std::numbers::pi;
  const double tol = 1e-12 * s.abs().maxCoeff();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (f2(i) > cut * cut) EXPECT_LT(std::abs(s(i)), tol);
  }
  EXPECT_LT(s.row(25).abs().maxCoeff(), tol);
  EXPECT_LT(s.col(25).abs().maxCoeff(), tol);
}

TEST(Prepare, ImageWithMatchingEdgesIsItsOwnPeriodicComponent) {
  // first and last rows (and columns) coincide, so there is no boundary jump to remove
  PixelGrid g(32, 40);
  for (Eigen::Index r = 0; r < 32; ++r) {
    for (Eigen::Index c = 0; c < 40; ++c) {
      g(r, c) = std::sin(2 * std::numbers::pi * 3 * c / 39.0) + 0.5 * std::cos(2 * std::numbers::pi * 2 * r / 31.0);
    }
  }
  const PixelGrid p = periodicComponent(g);
  EXPECT_LT(((p - p.mean()) - (g - g.mean())).abs().maxCoeff(), 1e-10);
}

TEST(Prepare, PeriodicComponentRemovesBoundaryJumps) {
  PixelGrid ramp(16, 16);
  for (Eigen::Index r = 0; r < 16; ++r) {
    for (Eigen::Index c = 0; c < 16; ++c) ramp(r, c) = static_cast<double>(c);
  }
  const PixelGrid p = periodicComponent(ramp);
  const double wrapJump = std::abs(p(0, 15) - p(0, 0));
  EXPECT_LT(wrapJump, 0.5 * std::abs(ramp(0, 15) - ramp(0, 0)));
}

TEST(Seeds, MixSeedIsStableAndSpreads) {
  EXPECT_EQ(mixSeed(1, 2), mixSeed(1, 2));
  EXPECT_NE(mixSeed(1, 2), mixSeed(2, 1));
  EXPECT_NE(mixSeed(0, 0), mixSeed(0, 1));
}
