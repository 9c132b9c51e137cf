#ifndef SHIFTBENCH_BENCH_HPP
#define SHIFTBENCH_BENCH_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftbench/estimators.hpp"
#include "shiftbench/synth.hpp"

namespace shiftbench {

enum class MethodKind { Mle, Map, Constrained };

/// One estimator configuration of a sweep. Spelled "method:optimizer:init",
/// e.g. "map:vp:random"; constrained alignment is "constrained:lsq:wiener"
/// or "constrained:lsq:identity" (the init slot names its prefilter).
struct MethodSpec {
  MethodKind kind = MethodKind::Mle;
  Optimizer optimizer = Optimizer::Ccd;
  Init init = Init::Pairwise;
  bool wienerPrefilter = true;

  std::string methodName() const;
  std::string optimizerName() const;
  std::string initName() const;
  std::string key() const;

  static MethodSpec parse(const std::string& token);
  static MethodSpec mle(Optimizer o = Optimizer::Ccd, Init i = Init::Pairwise);
  static MethodSpec map(Optimizer o = Optimizer::Ccd, Init i = Init::Pairwise);
  static MethodSpec constrained(bool wiener = true);

  bool operator==(const MethodSpec&) const = default;
};

struct SweepSpec {
  /// Paths as written; relative ones resolve against baseDirectory.
  std::vector<std::string> truthImages;
  std::filesystem::path baseDirectory;
  std::vector<double> snrGridDb;
  std::vector<int> kValues;
  std::vector<MethodSpec> methods;
  TrajectoryModel trajectory;
  int trials = 100;
  std::uint64_t baseSeed = 0;
  /// When false, wall_s is written as 0 so CSVs compare byte for byte.
  bool recordTiming = true;
  EstimatorConfig estimator;

  void validate() const;
};

class SpecError : public std::runtime_error {
 public:
  SpecError(const std::string& what, std::vector<std::string> keys)
      : std::runtime_error(what), offendingKeys(std::move(keys)) {}
  std::vector<std::string> offendingKeys;
};

/// key=value lines; '#' starts a comment; lists are comma separated and the
/// SNR list also accepts "start:step:stop" ranges and "inf" (noiseless).
SweepSpec parseSweepSpec(const std::string& text, const std::filesystem::path& baseDirectory = {});
SweepSpec loadSweepSpec(const std::filesystem::path& path);

struct TrialOutcome {
  /// sum_i |tau_hat_i - tau_i|^2 / K over the canonical representatives.
  double squaredError = 0.0;
  /// Per-frame error vectors for frames 1..K.
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> componentErrors;
  ShiftSet estimated;
  ShiftSet truth;
  bool converged = true;
  double seconds = 0.0;
};

/// The stack a trial with this seed sees: shifts drawn from trajectory, noise
/// set for snrDb (+inf = noiseless).
SyntheticStack trialStack(const PixelGrid& truth, double snrDb, int k, const TrajectoryModel& trajectory,
                          std::uint64_t seed);

/// Generates a stack at snrDb (+inf = noiseless) and runs one estimator on it.
/// The stack depends only on seed, so different methods can share noise.
TrialOutcome runTrial(const PixelGrid& truth, double snrDb, int k, const MethodSpec& method,
                      const TrajectoryModel& trajectory, std::uint64_t seed, const EstimatorConfig& base = {});

struct CellStats {
  int trials = 0;
  double mseMean = 0.0;
  double ciLo = 0.0;
  double ciHi = 0.0;
  double biasSq = 0.0;
  double variance = 0.0;
  double convergedFraction = 0.0;
  double wallSeconds = 0.0;
};

/// Mean with a Student-t 95% interval, plus the squared-bias / variance split
/// computed per frame and component, then averaged over frames.
CellStats aggregateTrials(std::span<const TrialOutcome> trials, bool recordTiming = true);

struct CellKey {
  std::string truth;
  double snrDb = 0.0;
  int k = 0;
  MethodSpec method;

  bool operator<(const CellKey& other) const;
};

struct SweepCell {
  CellKey key;
  CellStats stats;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  /// Per-image failures (unreadable truth, ...); the sweep skips those images.
  std::vector<std::string> errors;

  const SweepCell* find(const std::string& truth, double snrDb, int k, const MethodSpec& method) const;
};

using ProgressFn = std::function<void(const SweepCell& cell, std::size_t done, std::size_t total)>;

SweepResult runSweep(const SweepSpec& spec, const ProgressFn& progress = {});

std::uint64_t trialSeed(std::uint64_t baseSeed, const std::string& truth, double snrDb, int k, int trial);

/// SHIFTBENCH_THREADS when set, else the hardware concurrency.
int workerCount();

inline constexpr const char* kCsvHeader =
    "truth,snr_db,k,method,optimizer,init,mse_mean,ci_lo,ci_hi,bias_sq,variance,converged_frac,wall_s";

void emitCsv(const SweepResult& result, std::ostream& out);
void emitCsv(const SweepResult& result, const std::filesystem::path& path);
SweepResult parseCsv(std::istream& in);

/// gnuplot script drawing log-scale MSE versus SNR, one curve per (truth, K, method).
void emitPlotScript(const SweepResult& result, const std::string& csvPath, std::ostream& out);

/// Highest SNR at which mseMean exceeds threshold (px^2), if any.
std::optional<double> breakdownKnee(const SweepResult& result, const std::string& truth, int k,
                                    const MethodSpec& method, double threshold = 1.0);

/// Loads a grayscale truth (first channel) and band-limit-prepares it.
PixelGrid loadPreparedTruth(const std::filesystem::path& path);

}  // namespace shiftbench

#endif  // SHIFTBENCH_BENCH_HPP
