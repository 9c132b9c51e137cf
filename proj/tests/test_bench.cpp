#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "shiftbench/bench.hpp"
#include "shiftbench/image_io.hpp"
#include "support.hpp"

using namespace shiftbench;
using namespace testing_support;

namespace {

const PixelGrid& camera() {
  static const PixelGrid g = loadPreparedTruth(dataDir() / "truths" / "camera_50.pgm");
  return g;
}

std::string cameraPath() { return (dataDir() / "truths" / "camera_50.pgm").string(); }

SweepSpec smallSpec() {
  return parseSweepSpec("truths = " + cameraPath() +
                        "\nsnr_db = 0, inf\nk = 2\nmethods = mle:ccd:pairwise, map:vp:pairwise, constrained\n"
                        "trials = 6\nseed = 3\ntiming = off\n");
}

std::string csvOf(const SweepResult& r) {
  std::ostringstream out;
  emitCsv(r, out);
  return out.str();
}

std::vector<std::string> keysOf(const std::string& text) {
  try {
    parseSweepSpec(text);
  } catch (const SpecError& e) {
    return e.offendingKeys;
  }
  return {};
}

TrialOutcome outcome(double se, double ex, double ey) {
  TrialOutcome t;
  t.squaredError = se;
  t.componentErrors.resize(1, 2);
  t.componentErrors << ex, ey;
  return t;
}

class ScopedThreads {
 public:
  explicit ScopedThreads(const char* value) {
    if (const char* old = std::getenv("SHIFTBENCH_THREADS")) saved_ = old;
    ::setenv("SHIFTBENCH_THREADS", value, 1);
  }
  ~ScopedThreads() {
    if (saved_) ::setenv("SHIFTBENCH_THREADS", saved_->c_str(), 1);
    else ::unsetenv("SHIFTBENCH_THREADS");
  }

 private:
  std::optional<std::string> saved_;
};

}  // namespace

TEST(MethodSpec, ParseAndKeyRoundTrip) {
  for (const char* token : {"mle:ccd:pairwise", "mle:vp:random", "map:ccd:random", "map:vp:pairwise",
                            "constrained:lsq:wiener", "constrained:lsq:identity"}) {
    const MethodSpec m = MethodSpec::parse(token);
    EXPECT_EQ(m.key(), token);
    EXPECT_EQ(MethodSpec::parse(m.key()), m);
  }
  EXPECT_EQ(MethodSpec::parse("constrained"), MethodSpec::constrained(true));
  EXPECT_EQ(MethodSpec::parse("map:vp:random"), MethodSpec::map(Optimizer::Vp, Init::Random));
  for (const char* bad : {"", "mle", "mle:ccd", "mle:bfgs:pairwise", "ml:ccd:pairwise", "map:ccd:zero",
                          "constrained:lsq:median", "constrained:qr:wiener"}) {
    EXPECT_THROW(MethodSpec::parse(bad), std::invalid_argument) << bad;
  }
}

TEST(SweepSpecParse, RangesListsAndDefaults) {
  const SweepSpec s = parseSweepSpec(
      "# comment line\n"
      "truths = a.pgm, b.pgm\n"
      "snr_db = -4:2:2, inf, 7.5   # trailing comment\n"
      "k = 1, 5\n"
      "methods = mle:ccd:pairwise, constrained:lsq:identity\n"
      "trajectory = drift\n"
      "speed_mean = 0.7\n"
      "trials = 10\n"
      "seed = 99\n"
      "shift_tol = 1e-5\n",
      "/base");
  EXPECT_EQ(s.truthImages, (std::vector<std::string>{"a.pgm", "b.pgm"}));
  ASSERT_EQ(s.snrGridDb.size(), 6u);
  EXPECT_EQ(s.snrGridDb[0], -4.0);
  EXPECT_EQ(s.snrGridDb[3], 2.0);
  EXPECT_TRUE(std::isinf(s.snrGridDb[4]));
  EXPECT_EQ(s.snrGridDb[5], 7.5);
  EXPECT_EQ(s.kValues, (std::vector<int>{1, 5}));
  EXPECT_EQ(s.methods[1], MethodSpec::constrained(false));
  EXPECT_EQ(s.trajectory.kind, TrajectoryModel::Kind::Drift);
  EXPECT_EQ(s.trajectory.speedMean, 0.7);
  EXPECT_EQ(s.trials, 10);
  EXPECT_EQ(s.baseSeed, 99u);
  EXPECT_EQ(s.estimator.shiftTol, 1e-5);
  EXPECT_TRUE(s.recordTiming);
  EXPECT_EQ(s.baseDirectory, std::filesystem::path("/base"));

  const SweepSpec range = parseSweepSpec("truths=x\nsnr_db=-20:2:20\nk=5\nmethods=map:ccd:pairwise\n");
  EXPECT_EQ(range.snrGridDb.size(), 21u);
  EXPECT_EQ(range.snrGridDb.back(), 20.0);
  EXPECT_EQ(range.trials, 100);
}

TEST(SweepSpecParse, ErrorsListOffendingKeys) {
  const std::string ok = "truths=x\nsnr_db=0\nk=5\nmethods=mle:ccd:pairwise\n";
  EXPECT_EQ(keysOf(ok), std::vector<std::string>{});
  EXPECT_EQ(keysOf(ok + "colour = blue\n"), std::vector<std::string>{"colour"});
  EXPECT_EQ(keysOf(ok + "k = five\nmethods = mle:ccd\n"), (std::vector<std::string>{"k", "methods"}));
  EXPECT_EQ(keysOf(ok + "snr_db = 4:-1:0\n"), std::vector<std::string>{"snr_db"});
  EXPECT_EQ(keysOf(ok + "timing = maybe\n"), std::vector<std::string>{"timing"});
  EXPECT_EQ(keysOf("snr_db=0\nk=5\nmethods=mle:ccd:pairwise\n"), std::vector<std::string>{"truths"});
  EXPECT_EQ(keysOf(ok + "k = 0\ntrials = 1\n"), (std::vector<std::string>{"k", "trials"}));
  EXPECT_EQ(keysOf(ok + "half_range = -1\n"), std::vector<std::string>{"trajectory"});
  EXPECT_EQ(keysOf(ok + "shift_tol = 0\n"), std::vector<std::string>{"estimator"});
  EXPECT_THROW(loadSweepSpec(scratchDir("bench_missing") / "none.spec"), IoError);
}

TEST(RunTrial, NoiselessTrialsAreExact) {
  for (const char* token : {"mle:ccd:pairwise", "mle:vp:pairwise", "map:ccd:pairwise", "map:vp:pairwise",
                            "constrained:lsq:wiener", "constrained:lsq:identity"}) {
    const TrialOutcome t = runTrial(camera(), std::numeric_limits<double>::infinity(), 5, MethodSpec::parse(token),
                                    TrajectoryModel::iid(2.0), 17);
    EXPECT_LT(t.squaredError, 1e-12) << token;
    EXPECT_EQ(t.componentErrors.rows(), 5);
    EXPECT_EQ(t.truth.rows(), 6);
  }
}

TEST(RunTrial, DeterministicAndSharesStacksAcrossMethods) {
  const auto m = MethodSpec::map(Optimizer::Ccd, Init::Random);
  const TrialOutcome a = runTrial(camera(), -6.0, 3, m, TrajectoryModel::iid(2.0), 5);
  const TrialOutcome b = runTrial(camera(), -6.0, 3, m, TrajectoryModel::iid(2.0), 5);
  EXPECT_EQ(a.estimated, b.estimated);
  EXPECT_EQ(a.squaredError, b.squaredError);
  const TrialOutcome c = runTrial(camera(), -6.0, 3, MethodSpec::mle(), TrajectoryModel::iid(2.0), 5);
  EXPECT_EQ(a.truth, c.truth);
}

TEST(RunTrial, SingleFrameMleMatchesPairwiseRegistration) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SyntheticStack stack = trialStack(camera(), 0.0, 1, TrajectoryModel::iid(2.0), seed);
    const PairwiseResult pw = pairwiseAlign(toSpectra(stack.frames), CostWeights::identity(50, 50));
    const TrialOutcome t = runTrial(camera(), 0.0, 1, MethodSpec::mle(), TrajectoryModel::iid(2.0), seed);
    EXPECT_LT((t.estimated - pw.shifts).cwiseAbs().maxCoeff(), 1e-9);
    const Shift2D e = wrapShift(Shift2D((pw.shifts.row(1) - stack.trueShifts.row(1)).transpose()), 50, 50);
    EXPECT_NEAR(t.squaredError, e.squaredNorm(), 1e-9);
  }
}

TEST(Aggregate, DecompositionAndInterval) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.3, 1.0);
  std::vector<TrialOutcome> trials;
  for (int i = 0; i < 100; ++i) {
    TrialOutcome t;
    t.componentErrors.resize(3, 2);
    for (int j = 0; j < 6; ++j) t.componentErrors(j) = n(rng);
    t.squaredError = t.componentErrors.squaredNorm() / 3.0;
    trials.push_back(t);
  }
  const CellStats st = aggregateTrials(trials);
  EXPECT_EQ(st.trials, 100);
  EXPECT_NEAR(st.biasSq + st.variance, st.mseMean, 1e-9 * st.mseMean);
  EXPECT_LE(st.ciLo, st.mseMean);
  EXPECT_GE(st.ciHi, st.mseMean);

  double mean = 0.0;
  for (const auto& t : trials) mean += t.squaredError / 100.0;
  double ss = 0.0;
  for (const auto& t : trials) ss += (t.squaredError - mean) * (t.squaredError - mean);
  // upper 2.5% point of Student's t with 99 degrees of freedom
  const double half = 1.9842169515086827 * std::sqrt(ss / 99.0) / 10.0;
  EXPECT_NEAR(st.ciHi - st.mseMean, half, 1e-9 * half);
  EXPECT_NEAR(st.mseMean - st.ciLo, half, 1e-9 * half);
}

TEST(Aggregate, BiasAndVarianceOfAKnownSample) {
  const std::vector<TrialOutcome> trials{outcome(1.0 + 0.0, 1.0, 0.0), outcome(9.0, 3.0, 0.0)};
  const CellStats st = aggregateTrials(trials, false);
  EXPECT_DOUBLE_EQ(st.mseMean, 5.0);
  EXPECT_DOUBLE_EQ(st.biasSq, 4.0);
  EXPECT_DOUBLE_EQ(st.variance, 1.0);
  EXPECT_EQ(st.wallSeconds, 0.0);
  EXPECT_EQ(st.convergedFraction, 1.0);
}

TEST(Aggregate, IntervalCoverageIsNominal) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(4.0, 2.0);
  int covered = 0;
  const int runs = 400;
  for (int r = 0; r < runs; ++r) {
    std::vector<TrialOutcome> trials;
    for (int i = 0; i < 20; ++i) trials.push_back(outcome(n(rng), 0.0, 0.0));
    const CellStats st = aggregateTrials(trials);
    if (st.ciLo <= 4.0 && 4.0 <= st.ciHi) ++covered;
  }
  const double frac = static_cast<double>(covered) / runs;
  EXPECT_GE(frac, 0.90);
  EXPECT_LE(frac, 0.99);
}

TEST(Sweep, NoiselessCellsAreExactAndNoisyCellsAreNot) {
  ScopedThreads threads("2");
  std::vector<std::size_t> seen;
  const SweepResult r = runSweep(smallSpec(), [&](const SweepCell&, std::size_t done, std::size_t total) {
    seen.push_back(done);
    EXPECT_EQ(total, 6u);
  });
  EXPECT_TRUE(r.errors.empty());
  ASSERT_EQ(r.cells.size(), 6u);
  EXPECT_EQ(seen.size(), 6u);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.stats.trials, 6);
    if (std::isinf(c.key.snrDb)) EXPECT_LT(c.stats.mseMean, 1e-12) << c.key.method.key();
    else EXPECT_GT(c.stats.mseMean, 0.0);
  }
  for (std::size_t i = 1; i < r.cells.size(); ++i) EXPECT_FALSE(r.cells[i].key < r.cells[i - 1].key);
  EXPECT_NE(r.find(cameraPath(), 0.0, 2, MethodSpec::constrained(true)), nullptr);
  EXPECT_EQ(r.find(cameraPath(), 1.0, 2, MethodSpec::constrained(true)), nullptr);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  std::string one;
  std::string four;
  {
    ScopedThreads threads("1");
    EXPECT_EQ(workerCount(), 1);
    one = csvOf(runSweep(smallSpec()));
  }
  {
    ScopedThreads threads("4");
    four = csvOf(runSweep(smallSpec()));
    EXPECT_EQ(csvOf(runSweep(smallSpec())), four);
  }
  EXPECT_EQ(one, four);
}

TEST(Sweep, UnreadableTruthIsReportedAndSkipped) {
  const std::filesystem::path dir = scratchDir("bench_unreadable");
  {
    std::ofstream(dir / "broken.pgm") << "P5 nonsense";
  }
  const std::filesystem::path real = std::filesystem::path(cameraPath());
  std::filesystem::copy_file(real, dir / "camera_50.pgm");
  const SweepSpec spec = parseSweepSpec(
      "truths = broken.pgm, camera_50.pgm, absent.pgm\nsnr_db = inf\nk = 1\nmethods = mle:ccd:pairwise\n"
      "trials = 2\ntiming = off\n",
      dir);
  const SweepResult r = runSweep(spec);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].rfind("broken.pgm", 0), 0u);
  EXPECT_EQ(r.errors[1].rfind("absent.pgm", 0), 0u);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.cells[0].key.truth, "camera_50.pgm");
}

TEST(Csv, HeaderRowsAndParseBack) {
  SweepResult empty;
  EXPECT_EQ(csvOf(empty), std::string(kCsvHeader) + "\n");

  SweepResult r;
  const auto mk = [](std::string truth, double snr, int k, MethodSpec m, double mse) {
    SweepCell c;
    c.key = CellKey{std::move(truth), snr, k, m};
    c.stats.mseMean = mse;
    c.stats.ciLo = mse * 0.9;
    c.stats.ciHi = mse * 1.1;
    c.stats.biasSq = 0.1 * mse;
    c.stats.variance = 0.9 * mse;
    c.stats.convergedFraction = 0.75;
    c.stats.wallSeconds = 0.125;
    return c;
  };
  r.cells.push_back(mk("b", 2.0, 5, MethodSpec::map(), 1.0 / 3.0));
  r.cells.push_back(mk("a", std::numeric_limits<double>::infinity(), 5, MethodSpec::mle(), 0.0));
  r.cells.push_back(mk("a", -4.0, 5, MethodSpec::constrained(false), 2.5));
  const std::string text = csvOf(r);

  std::istringstream lines(text);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], kCsvHeader);
  EXPECT_EQ(rows[1].rfind("a,-4,5,constrained,lsq,identity,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("a,inf,5,mle,ccd,pairwise,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("b,2,5,map,ccd,pairwise,", 0), 0u);

  std::istringstream in(text);
  const SweepResult back = parseCsv(in);
  ASSERT_EQ(back.cells.size(), 3u);
  const SweepCell* b = back.find("b", 2.0, 5, MethodSpec::map());
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->stats.mseMean, 1.0 / 3.0);
  EXPECT_EQ(b->stats.ciHi, (1.0 / 3.0) * 1.1);
  EXPECT_EQ(b->stats.wallSeconds, 0.125);
  EXPECT_TRUE(std::isinf(back.cells[1].key.snrDb));
  EXPECT_EQ(csvOf(back), text);

  std::istringstream badHeader("truth,snr\n");
  EXPECT_THROW(parseCsv(badHeader), IoError);
  std::istringstream shortRow(std::string(kCsvHeader) + "\na,1,2\n");
  EXPECT_THROW(parseCsv(shortRow), IoError);
}

TEST(Csv, PlotScriptNamesEveryCurve) {
  SweepResult r;
  for (double snr : {-2.0, 0.0}) {
    for (const auto& m : {MethodSpec::mle(), MethodSpec::map()}) {
      SweepCell c;
      c.key = CellKey{"cam", snr, 5, m};
      r.cells.push_back(c);
    }
  }
  std::ostringstream out;
  emitPlotScript(r, "sweep.csv", out);
  const std::string s = out.str();
  EXPECT_NE(s.find("set logscale y"), std::string::npos);
  EXPECT_NE(s.find("title 'cam K=5 mle:ccd:pairwise'"), std::string::npos);
  EXPECT_NE(s.find("title 'cam K=5 map:ccd:pairwise'"), std::string::npos);
  std::size_t curves = 0;
  for (std::size_t p = s.find("'sweep.csv'"); p != std::string::npos; p = s.find("'sweep.csv'", p + 1)) ++curves;
  EXPECT_EQ(curves, 2u);
}

TEST(Knee, HighestSnrAboveThreshold) {
  SweepResult r;
  const double mses[] = {9.0, 3.0, 0.5, 1.5, 0.1, 0.0};
  const double snrs[] = {-10.0, -8.0, -6.0, -4.0, -2.0, std::numeric_limits<double>::infinity()};
  for (int i = 0; i < 6; ++i) {
    SweepCell c;
    c.key = CellKey{"cam", snrs[i], 5, MethodSpec::mle()};
    c.stats.mseMean = mses[i];
    r.cells.push_back(c);
  }
  EXPECT_EQ(breakdownKnee(r, "cam", 5, MethodSpec::mle()), -4.0);
  EXPECT_EQ(breakdownKnee(r, "cam", 5, MethodSpec::mle(), 5.0), -10.0);
  EXPECT_FALSE(breakdownKnee(r, "cam", 5, MethodSpec::mle(), 10.0).has_value());
  EXPECT_FALSE(breakdownKnee(r, "cam", 10, MethodSpec::mle()).has_value());
}

TEST(Seeds, TrialSeedSeparatesCellsButNotMethods) {
  const auto s = trialSeed(1, "camera_50.pgm", -4.0, 5, 0);
  EXPECT_EQ(s, trialSeed(1, "camera_50.pgm", -4.0, 5, 0));
  EXPECT_NE(s, trialSeed(2, "camera_50.pgm", -4.0, 5, 0));
  EXPECT_NE(s, trialSeed(1, "coffee_50.pgm", -4.0, 5, 0));
  EXPECT_NE(s, trialSeed(1, "camera_50.pgm", -2.0, 5, 0));
  EXPECT_NE(s, trialSeed(1, "camera_50.pgm", -4.0, 10, 0));
  EXPECT_NE(s, trialSeed(1, "camera_50.pgm", -4.0, 5, 1));
}
