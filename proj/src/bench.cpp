#include "shiftbench/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "shiftbench/image_io.hpp"
#include "shiftbench/spectral.hpp"

namespace shiftbench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> splitList(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parseReal(const std::string& token) {
  const std::string t = trim(token);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(t, &used);
  if (used != t.size()) throw std::invalid_argument("trailing characters in number: " + t);
  return v;
}

long long parseInteger(const std::string& token) {
  const std::string t = trim(token);
  std::size_t used = 0;
  const long long v = std::stoll(t, &used);
  if (used != t.size()) throw std::invalid_argument("not an integer: " + t);
  return v;
}

std::string formatReal(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

std::uint64_t hashString(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

// ---- MethodSpec -----------------------------------------------------------

std::string MethodSpec::methodName() const {
  switch (kind) {
    case MethodKind::Mle: return "mle";
    case MethodKind::Map: return "map";
    case MethodKind::Constrained: return "constrained";
  }
  return "?";
}

std::string MethodSpec::optimizerName() const {
  return kind == MethodKind::Constrained ? "lsq" : toString(optimizer);
}

std::string MethodSpec::initName() const {
  if (kind == MethodKind::Constrained) return wienerPrefilter ? "wiener" : "identity";
  return toString(init);
}

std::string MethodSpec::key() const { return methodName() + ":" + optimizerName() + ":" + initName(); }

MethodSpec MethodSpec::mle(Optimizer o, Init i) { return MethodSpec{MethodKind::Mle, o, i, true}; }
MethodSpec MethodSpec::map(Optimizer o, Init i) { return MethodSpec{MethodKind::Map, o, i, true}; }
MethodSpec MethodSpec::constrained(bool wiener) {
  return MethodSpec{MethodKind::Constrained, Optimizer::Ccd, Init::Pairwise, wiener};
}

MethodSpec MethodSpec::parse(const std::string& token) {
  const auto parts = splitList(token, ':');
  if (parts.empty()) throw std::invalid_argument("empty method");
  if (parts[0] == "constrained") {
    if (parts.size() == 1) return constrained(true);
    if (parts.size() == 3 && parts[1] == "lsq" && (parts[2] == "wiener" || parts[2] == "identity")) {
      return constrained(parts[2] == "wiener");
    }
    throw std::invalid_argument("bad constrained method: " + token);
  }
  if (parts.size() != 3) throw std::invalid_argument("method must be method:optimizer:init, got " + token);
  MethodSpec m;
  if (parts[0] == "mle") m.kind = MethodKind::Mle;
  else if (parts[0] == "map") m.kind = MethodKind::Map;
  else throw std::invalid_argument("unknown method: " + parts[0]);
  if (parts[1] == "ccd") m.optimizer = Optimizer::Ccd;
  else if (parts[1] == "vp") m.optimizer = Optimizer::Vp;
  else throw std::invalid_argument("unknown optimizer: " + parts[1]);
  if (parts[2] == "pairwise") m.init = Init::Pairwise;
  else if (parts[2] == "random") m.init = Init::Random;
  else throw std::invalid_argument("unknown init: " + parts[2]);
  return m;
}

// ---- SweepSpec ------------------------------------------------------------

void SweepSpec::validate() const {
  std::vector<std::string> bad;
  if (truthImages.empty()) bad.push_back("truths");
  if (snrGridDb.empty() || std::any_of(snrGridDb.begin(), snrGridDb.end(), [](double s) { return std::isnan(s); })) {
    bad.push_back("snr_db");
  }
  if (kValues.empty() || std::any_of(kValues.begin(), kValues.end(), [](int k) { return k < 1; })) bad.push_back("k");
  if (methods.empty()) bad.push_back("methods");
  if (trials < 2) bad.push_back("trials");
  try {
    trajectory.validate();
  } catch (const InvalidInput&) {
    bad.push_back("trajectory");
  }
  try {
    estimator.validate();
  } catch (const InvalidInput&) {
    bad.push_back("estimator");
  }
  if (!bad.empty()) throw SpecError("invalid sweep spec", bad);
}

SweepSpec parseSweepSpec(const std::string& text, const std::filesystem::path& baseDirectory) {
  SweepSpec spec;
  spec.baseDirectory = baseDirectory;
  std::vector<std::string> bad;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.push_back(line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "truths") {
        spec.truthImages = splitList(value);
      } else if (key == "snr_db") {
        spec.snrGridDb.clear();
        for (const auto& item : splitList(value)) {
          const auto range = splitList(item, ':');
          if (range.size() == 3) {
            const double start = parseReal(range[0]);
            const double step = parseReal(range[1]);
            const double stop = parseReal(range[2]);
            if (!(step > 0.0) || stop < start) throw std::invalid_argument("bad range");
            const auto count = static_cast<int>(std::floor((stop - start) / step + 1e-9));
            for (int i = 0; i <= count; ++i) spec.snrGridDb.push_back(start + i * step);
          } else {
            spec.snrGridDb.push_back(parseReal(item));
          }
        }
      } else if (key == "k") {
        spec.kValues.clear();
        for (const auto& item : splitList(value)) spec.kValues.push_back(static_cast<int>(parseInteger(item)));
      } else if (key == "methods") {
        spec.methods.clear();
        for (const auto& item : splitList(value)) spec.methods.push_back(MethodSpec::parse(item));
      } else if (key == "trajectory") {
        if (value == "iid") spec.trajectory.kind = TrajectoryModel::Kind::IidUniform;
        else if (value == "drift") spec.trajectory.kind = TrajectoryModel::Kind::Drift;
        else throw std::invalid_argument("trajectory must be iid or drift");
      } else if (key == "half_range") {
        spec.trajectory.halfRange = parseReal(value);
      } else if (key == "speed_mean") {
        spec.trajectory.speedMean = parseReal(value);
      } else if (key == "speed_std") {
        spec.trajectory.speedStd = parseReal(value);
      } else if (key == "angle_std") {
        spec.trajectory.angleStd = parseReal(value);
      } else if (key == "trials") {
        spec.trials = static_cast<int>(parseInteger(value));
      } else if (key == "seed") {
        spec.baseSeed = static_cast<std::uint64_t>(parseInteger(value));
      } else if (key == "timing") {
        if (value != "on" && value != "off") throw std::invalid_argument("timing must be on or off");
        spec.recordTiming = value == "on";
      } else if (key == "max_outer_iters") {
        spec.estimator.maxOuterIters = static_cast<int>(parseInteger(value));
      } else if (key == "shift_tol") {
        spec.estimator.shiftTol = parseReal(value);
      } else if (key == "newton_iters") {
        spec.estimator.newtonIters = static_cast<int>(parseInteger(value));
      } else if (key == "random_init_half_range") {
        spec.estimator.randomInitHalfRange = parseReal(value);
      } else {
        bad.push_back(key);
      }
    } catch (const std::exception&) {
      bad.push_back(key);
    }
  }
  if (!bad.empty()) throw SpecError("malformed sweep spec", bad);
  spec.validate();
  return spec;
}

SweepSpec loadSweepSpec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseSweepSpec(ss.str(), path.parent_path());
}

// ---- trials ---------------------------------------------------------------

namespace {

constexpr double kNominalNoiselessSnrDb = 40.0;

PriorSpectrum fittedPrior(const std::vector<Spectrum>& spectra, double sigma2) {
  const PriorFit fit = fitPriorAmplitude(spectra, sigma2);
  return makePrior(spectra.front().rows(), spectra.front().cols(), fit.amplitude, sigma2);
}

}  // namespace

SyntheticStack trialStack(const PixelGrid& truth, double snrDb, int k, const TrajectoryModel& trajectory,
                          std::uint64_t seed) {
  if (k < 1) throw InvalidInput("trialStack: k must be >= 1");
  const bool noiseless = std::isinf(snrDb) && snrDb > 0.0;
  const double sigma2 = noiseless ? 0.0 : sigma2ForSnrDb(truth, snrDb);
  return makeStack(truth, drawShifts(trajectory, k, mixSeed(seed, 1)), sigma2, mixSeed(seed, 2));
}

TrialOutcome runTrial(const PixelGrid& truth, double snrDb, int k, const MethodSpec& method,
                      const TrajectoryModel& trajectory, std::uint64_t seed, const EstimatorConfig& base) {
  const auto start = std::chrono::steady_clock::now();
  const SyntheticStack stack = trialStack(truth, snrDb, k, trajectory, seed);
  const ShiftSet& shifts = stack.trueShifts;
  const bool noiseless = stack.sigma2 == 0.0;
  const double sigma2 = stack.sigma2;
  const std::vector<Spectrum> spectra = toSpectra(stack.frames);

  // Noiseless stacks still get a proper Wiener weighting for the prior-based methods.
  const double priorSigma2 = noiseless ? sigma2ForSnrDb(truth, kNominalNoiselessSnrDb) : sigma2;

  TrialOutcome out;
  out.truth = shifts;
  EstimatorConfig cfg = base;
  cfg.seed = mixSeed(seed, hashString(method.key()));
  cfg.optimizer = method.optimizer;
  cfg.init = method.init;

  switch (method.kind) {
    case MethodKind::Mle: {
      cfg.method = Method::Mle;
      const EstimateResult r = estimate(spectra, cfg);
      out.estimated = r.shifts;
      out.converged = r.converged;
      break;
    }
    case MethodKind::Map: {
      cfg.method = Method::Map;
      const EstimateResult r = estimateMap(spectra, cfg, fittedPrior(spectra, priorSigma2));
      out.estimated = r.shifts;
      out.converged = r.converged;
      break;
    }
    case MethodKind::Constrained: {
      const CostWeights w = method.wienerPrefilter
                                ? CostWeights::wiener(fittedPrior(spectra, priorSigma2), k + 1)
                                : CostWeights::identity(truth.rows(), truth.cols());
      out.estimated = estimateConstrained(spectra, w, cfg.newtonIters).shifts;
      out.converged = true;
      break;
    }
  }

  out.componentErrors.resize(k, 2);
  double total = 0.0;
  for (int i = 1; i <= k; ++i) {
    const Shift2D diff = out.estimated.row(i).transpose() - shifts.row(i).transpose();
    const Shift2D e = wrapShift(diff, truth.rows(), truth.cols());
    out.componentErrors.row(i - 1) = e.transpose();
    total += e.squaredNorm();
  }
  out.squaredError = total / k;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

CellStats aggregateTrials(std::span<const TrialOutcome> trials, bool recordTiming) {
  CellStats st;
  st.trials = static_cast<int>(trials.size());
  if (trials.empty()) return st;
  const auto n = static_cast<double>(trials.size());
  const Eigen::Index k = trials.front().componentErrors.rows();

  double sum = 0.0;
  double converged = 0.0;
  double seconds = 0.0;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(k, 2);
  for (const auto& t : trials) {
    if (t.componentErrors.rows() != k) throw InvalidInput("aggregateTrials: inconsistent K");
    sum += t.squaredError;
    converged += t.converged ? 1.0 : 0.0;
    seconds += t.seconds;
    mean += t.componentErrors;
  }
  st.mseMean = sum / n;
  mean /= n;

  double spread = 0.0;
  double centred = 0.0;
  for (const auto& t : trials) {
    spread += (t.squaredError - st.mseMean) * (t.squaredError - st.mseMean);
    centred += (t.componentErrors - mean).squaredNorm();
  }
  st.biasSq = mean.squaredNorm() / static_cast<double>(k);
  st.variance = centred / (n * static_cast<double>(k));

  double half = 0.0;
  if (trials.size() >= 2) {
    const double sd = std::sqrt(spread / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    half = boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(n);
  }
  st.ciLo = st.mseMean - half;
  st.ciHi = st.mseMean + half;
  st.convergedFraction = converged / n;
  st.wallSeconds = recordTiming ? seconds : 0.0;
  return st;
}

// ---- sweep ----------------------------------------------------------------

bool CellKey::operator<(const CellKey& o) const {
  return std::make_tuple(truth, snrDb, k, method.methodName(), method.optimizerName(), method.initName()) <
         std::make_tuple(o.truth, o.snrDb, o.k, o.method.methodName(), o.method.optimizerName(), o.method.initName());
}

const SweepCell* SweepResult::find(const std::string& truth, double snrDb, int k, const MethodSpec& method) const {
  for (const auto& c : cells) {
    if (c.key.truth == truth && c.key.snrDb == snrDb && c.key.k == k && c.key.method.key() == method.key()) return &c;
  }
  return nullptr;
}

std::uint64_t trialSeed(std::uint64_t baseSeed, const std::string& truth, double snrDb, int k, int trial) {
  std::uint64_t s = mixSeed(baseSeed, hashString(truth));
  s = mixSeed(s, std::bit_cast<std::uint64_t>(snrDb));
  s = mixSeed(s, static_cast<std::uint64_t>(k));
  return mixSeed(s, static_cast<std::uint64_t>(trial));
}

int workerCount() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SHIFTBENCH_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) n = std::min(n, cap);
    } catch (const std::exception&) {
    }
  }
  return n;
}

PixelGrid loadPreparedTruth(const std::filesystem::path& path) {
  const Image img = readImage(path);
  return prepareTruth(img.channels.front());
}

SweepResult runSweep(const SweepSpec& spec, const ProgressFn& progress) {
  spec.validate();
  SweepResult result;

  std::vector<std::pair<std::string, PixelGrid>> truths;
  for (const auto& name : spec.truthImages) {
    std::filesystem::path p(name);
    if (p.is_relative() && !spec.baseDirectory.empty()) p = spec.baseDirectory / p;
    try {
      truths.emplace_back(name, loadPreparedTruth(p));
    } catch (const std::exception& e) {
      result.errors.push_back(name + ": " + e.what());
    }
  }

  const std::size_t total = truths.size() * spec.snrGridDb.size() * spec.kValues.size() * spec.methods.size();
  const int workers = std::min(workerCount(), spec.trials);
  std::size_t done = 0;
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(spec.trials));

  for (const auto& [name, truth] : truths) {
    for (double snr : spec.snrGridDb) {
      for (int k : spec.kValues) {
        for (const auto& method : spec.methods) {
          std::atomic<int> next{0};
          auto work = [&] {
            for (int t = next++; t < spec.trials; t = next++) {
              outcomes[t] = runTrial(truth, snr, k, method, spec.trajectory, trialSeed(spec.baseSeed, name, snr, k, t),
                                     spec.estimator);
            }
          };
          if (workers <= 1) {
            work();
          } else {
            std::vector<std::jthread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
          }
          SweepCell cell{CellKey{name, snr, k, method}, aggregateTrials(outcomes, spec.recordTiming)};
          result.cells.push_back(cell);
          ++done;
          if (progress) progress(cell, done, total);
        }
      }
    }
  }
  std::stable_sort(result.cells.begin(), result.cells.end(),
                   [](const SweepCell& a, const SweepCell& b) { return a.key < b.key; });
  return result;
}

// ---- output ---------------------------------------------------------------

void emitCsv(const SweepResult& result, std::ostream& out) {
  std::vector<const SweepCell*> sorted;
  for (const auto& c : result.cells) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SweepCell* a, const SweepCell* b) { return a->key < b->key; });
  out << kCsvHeader << "\n";
  for (const SweepCell* c : sorted) {
    const auto& s = c->stats;
    out << c->key.truth << ',' << formatReal(c->key.snrDb) << ',' << c->key.k << ',' << c->key.method.methodName()
        << ',' << c->key.method.optimizerName() << ',' << c->key.method.initName() << ',' << formatReal(s.mseMean)
        << ',' << formatReal(s.ciLo) << ',' << formatReal(s.ciHi) << ',' << formatReal(s.biasSq) << ','
        << formatReal(s.variance) << ',' << formatReal(s.convergedFraction) << ',' << formatReal(s.wallSeconds)
        << "\n";
  }
}

void emitCsv(const SweepResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  emitCsv(result, out);
  if (!out) throw IoError("failed writing " + path.string());
}

SweepResult parseCsv(std::istream& in) {
  SweepResult result;
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCsvHeader) throw IoError("missing or unexpected CSV header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 13) throw IoError("CSV row has " + std::to_string(f.size()) + " fields");
    SweepCell c;
    c.key.truth = f[0];
    c.key.snrDb = parseReal(f[1]);
    c.key.k = static_cast<int>(parseInteger(f[2]));
    c.key.method = MethodSpec::parse(f[3] + ":" + f[4] + ":" + f[5]);
    c.stats.mseMean = parseReal(f[6]);
    c.stats.ciLo = parseReal(f[7]);
    c.stats.ciHi = parseReal(f[8]);
    c.stats.biasSq = parseReal(f[9]);
    c.stats.variance = parseReal(f[10]);
    c.stats.convergedFraction = parseReal(f[11]);
    c.stats.wallSeconds = parseReal(f[12]);
    result.cells.push_back(c);
  }
  return result;
}

void emitPlotScript(const SweepResult& result, const std::string& csvPath, std::ostream& out) {
  std::map<std::string, std::tuple<std::string, int, std::string>> series;
  for (const auto& c : result.cells) {
    const std::string label = c.key.truth + " K=" + std::to_string(c.key.k) + " " + c.key.method.key();
    series.emplace(label, std::make_tuple(c.key.truth, c.key.k, c.key.method.key()));
  }
  out << "# MSE (px^2) versus SNR (dB); columns follow the CSV header\n"
      << "set datafile separator ','\n"
      << "set key outside right\n"
      << "set logscale y\n"
      << "set xlabel 'SNR (dB)'\n"
      << "set ylabel 'MSE (px^2)'\n"
      << "set grid\n";
  if (series.empty()) {
    out << "# no cells\n";
    return;
  }
  out << "plot \\\n";
  std::size_t i = 0;
  for (const auto& [label, s] : series) {
    const auto& [truth, k, key] = s;
    const auto parts = splitList(key, ':');
    out << "  '" << csvPath << "' every ::1 using (strcol(1) eq '" << truth << "' && $3 == " << k
        << " && strcol(4) eq '" << parts[0] << "' && strcol(5) eq '" << parts[1] << "' && strcol(6) eq '"
        << parts[2] << "' ? $2 : 1/0):7:8:9 with yerrorlines title '" << label << "'"
        << (++i < series.size() ? ", \\\n" : "\n");
  }
}

std::optional<double> breakdownKnee(const SweepResult& result, const std::string& truth, int k,
                                    const MethodSpec& method, double threshold) {
  std::optional<double> knee;
  for (const auto& c : result.cells) {
    if (c.key.truth != truth || c.key.k != k || c.key.method.key() != method.key()) continue;
    if (!std::isfinite(c.key.snrDb)) continue;
    if (c.stats.mseMean > threshold && (!knee || c.key.snrDb > *knee)) knee = c.key.snrDb;
  }
  return knee;
}

}  // namespace shiftbench
