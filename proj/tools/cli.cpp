#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "shiftbench/bench.hpp"
#include "shiftbench/estimators.hpp"
#include "shiftbench/image_io.hpp"
#include "shiftbench/spectral.hpp"
#include "shiftbench/synth.hpp"

namespace fs = std::filesystem;

namespace shiftbench::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt("%.17g", v);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

double parseSnr(const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("--snr-db expects a number or inf, got '" + text + "'");
}

// Config file values fill options the command line left untouched.
void applyConfig(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> unknown;
  std::vector<std::pair<CLI::Option*, std::string>> pending;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = key == "config" || key == "help" ? nullptr : app.get_option_no_throw("--" + key);
    if (eq == std::string::npos || opt == nullptr) {
      unknown.push_back(key);
      continue;
    }
    pending.emplace_back(opt, trim(line.substr(eq + 1)));
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown config keys: " + list);
  }
  for (auto& [opt, value] : pending) {
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError("config " + opt->get_name() + ": " + e.what());
    }
  }
}

template <typename Checkable>
void validateFlags(const Checkable& c) {
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

template <typename T>
void requireSet(const std::optional<T>& v, const std::string& flag) {
  if (!v) throw UsageError(flag + " is required");
}

Method parseMethod(const std::string& s) {
  if (s == "mle") return Method::Mle;
  if (s == "map") return Method::Map;
  throw UsageError("unknown method " + s);
}

Optimizer parseOptimizer(const std::string& s) {
  if (s == "ccd") return Optimizer::Ccd;
  if (s == "vp") return Optimizer::Vp;
  throw UsageError("unknown optimizer " + s);
}

Init parseInit(const std::string& s) {
  if (s == "pairwise") return Init::Pairwise;
  if (s == "random") return Init::Random;
  throw UsageError("unknown init " + s);
}

void printShifts(std::ostream& out, const ShiftSet& shifts) {
  for (Eigen::Index i = 0; i < shifts.rows(); ++i) {
    out << i << ' ' << fmt("%.9g", shifts(i, 0)) << ' ' << fmt("%.9g", shifts(i, 1)) << '\n';
  }
}

std::vector<PixelGrid> loadChannel(const fs::path& dir, int channel) {
  const std::vector<Image> images = readFrameDirectory(dir);
  if (images.size() < 2) throw InvalidInput("need at least two frames in " + dir.string());
  std::vector<PixelGrid> frames;
  for (const auto& img : images) {
    if (channel >= static_cast<int>(img.channels.size())) {
      throw InvalidInput("frame has no channel " + std::to_string(channel));
    }
    frames.push_back(img.channels[channel]);
    if (frames.back().rows() != frames.front().rows() || frames.back().cols() != frames.front().cols()) {
      throw InvalidInput("frame size mismatch in " + dir.string());
    }
  }
  return frames;
}

double noiseVarianceOrNominal(const std::vector<PixelGrid>& frames) {
  const double s2 = estimateNoiseVariance(frames);
  if (s2 > 0.0) return s2;
  return sigma2ForSnrDb(frames.front(), 40.0);
}

PriorSpectrum fittedPrior(const std::vector<Spectrum>& spectra, double sigma2) {
  const PriorFit fit = fitPriorAmplitude(spectra, sigma2);
  return makePrior(spectra.front().rows(), spectra.front().cols(), fit.amplitude, sigma2);
}

SampleEncoding rangeEncoding(const std::vector<PixelGrid>& grids) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& g : grids) {
    lo = std::min(lo, g.minCoeff());
    hi = std::max(hi, g.maxCoeff());
  }
  SampleEncoding enc;
  enc.offset = lo;
  enc.scale = hi > lo ? 65535.0 / (hi - lo) : 1.0;
  return enc;
}

std::string frameName(int index, int count, const char* ext) {
  const int digits = std::max(3, static_cast<int>(std::to_string(count - 1).size()));
  std::string n = std::to_string(index);
  return "frame_" + std::string(digits - n.size(), '0') + n + ext;
}

// ---- synth ----------------------------------------------------------------

struct SynthOptions {
  std::string truth;
  std::optional<int> k;
  std::string snrDb = "inf";
  std::string trajectory = "iid";
  double halfRange = 2.0;
  double speedMean = 0.5;
  double speedStd = 0.1;
  double angleStd = 0.3;
  std::optional<double> initialAngle;
  std::uint64_t seed = 0;
  std::string out;
};

void addSynth(CLI::App& app, SynthOptions& o) {
  app.add_option("--truth", o.truth, "Truth image (PGM/PPM/PNG; first channel)");
  app.add_option("--k", o.k, "Number of shifted frames (K+1 frames are written)")->check(CLI::PositiveNumber);
  app.add_option("--snr-db", o.snrDb, "Gradient SNR in dB, or inf for noiseless");
  app.add_option("--trajectory", o.trajectory, "iid or drift")->check(CLI::IsMember({"iid", "drift"}));
  app.add_option("--half-range", o.halfRange, "iid: shift components ~ U[-h, h]")->check(CLI::NonNegativeNumber);
  app.add_option("--speed-mean", o.speedMean, "drift: mean speed (px/frame)")->check(CLI::NonNegativeNumber);
  app.add_option("--speed-std", o.speedStd, "drift: speed std")->check(CLI::NonNegativeNumber);
  app.add_option("--angle-std", o.angleStd, "drift: heading increment std (rad)")->check(CLI::NonNegativeNumber);
  app.add_option("--initial-angle", o.initialAngle, "drift: fixed initial heading (rad)");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--out", o.out, "Output directory");
}

int runSynth(const SynthOptions& o, std::ostream& out) {
  if (o.truth.empty()) throw UsageError("--truth is required");
  if (o.out.empty()) throw UsageError("--out is required");
  requireSet(o.k, "--k");
  const double snr = parseSnr(o.snrDb);
  TrajectoryModel model = o.trajectory == "drift" ? TrajectoryModel::drift(o.speedMean, o.speedStd, o.angleStd)
                                                  : TrajectoryModel::iid(o.halfRange);
  model.initialAngle = o.initialAngle;
  validateFlags(model);

  const PixelGrid truth = loadPreparedTruth(o.truth);
  const double sigma2 = std::isinf(snr) ? 0.0 : sigma2ForSnrDb(truth, snr);
  const ShiftSet shifts = roundToManifestPrecision(drawShifts(model, *o.k, mixSeed(o.seed, 1)));
  const SyntheticStack stack = makeStack(truth, shifts, sigma2, mixSeed(o.seed, 2));

  const fs::path dir(o.out);
  fs::create_directories(dir);
  const SampleEncoding enc = rangeEncoding(stack.frames);
  const int count = static_cast<int>(stack.frames.size());
  for (int i = 0; i < count; ++i) {
    writeImage(dir / frameName(i, count, ".pgm"), {stack.frames[i]}, enc);
    writeGridText(dir / frameName(i, count, ".tsv"), stack.frames[i]);
  }
  writeGridText(dir / "truth_grid.txt", truth);
  writeShiftManifest(dir / "shifts.txt", shifts);

  std::ofstream meta(dir / "metadata.txt");
  meta << "sigma2 " << number(sigma2) << '\n'
       << "snr_db " << number(stack.snrDb) << '\n'
       << "k " << *o.k << '\n'
       << "height " << truth.rows() << '\n'
       << "width " << truth.cols() << '\n'
       << "trajectory " << o.trajectory << '\n'
       << "seed " << o.seed << '\n'
       << "pgm_offset " << number(enc.offset) << '\n'
       << "pgm_scale " << number(enc.scale) << '\n';
  if (!meta) throw IoError("cannot write metadata in " + dir.string());

  out << "frames " << count << '\n' << "sigma2 " << number(sigma2) << '\n' << "snr_db " << number(stack.snrDb) << '\n';
  return kOk;
}

// ---- estimate -------------------------------------------------------------

struct EstimateOptions {
  std::string frames;
  std::string method = "mle";
  std::string optimizer = "ccd";
  std::string init = "pairwise";
  std::string prefilter = "wiener";
  std::optional<double> sigma2;
  std::string truthManifest;
  int channel = 0;
  int maxOuterIters = 50;
  double shiftTol = 1e-4;
  int newtonIters = 10;
  double randomInitHalfRange = 2.0;
  std::uint64_t seed = 0;
};

void addEstimate(CLI::App& app, EstimateOptions& o) {
  app.add_option("--frames", o.frames, "Directory of frames (frame 0 is the reference)");
  app.add_option("--method", o.method, "mle, map or constrained")->check(CLI::IsMember({"mle", "map", "constrained"}));
  app.add_option("--optimizer", o.optimizer, "ccd or vp")->check(CLI::IsMember({"ccd", "vp"}));
  app.add_option("--init", o.init, "pairwise or random")->check(CLI::IsMember({"pairwise", "random"}));
  app.add_option("--prefilter", o.prefilter, "constrained: wiener or identity")
      ->check(CLI::IsMember({"wiener", "identity"}));
  app.add_option("--sigma2", o.sigma2, "Noise variance (estimated from the frames when omitted)")
      ->check(CLI::PositiveNumber);
  app.add_option("--truth-manifest", o.truthManifest, "Shift manifest to score against");
  app.add_option("--channel", o.channel, "Channel used for estimation")->check(CLI::NonNegativeNumber);
  app.add_option("--max-outer-iters", o.maxOuterIters)->check(CLI::PositiveNumber);
  app.add_option("--shift-tol", o.shiftTol)->check(CLI::PositiveNumber);
  app.add_option("--newton-iters", o.newtonIters)->check(CLI::NonNegativeNumber);
  app.add_option("--random-init-half-range", o.randomInitHalfRange)->check(CLI::NonNegativeNumber);
  app.add_option("--seed", o.seed, "Seed for random initialisation");
}

int runEstimate(const EstimateOptions& o, std::ostream& out) {
  if (o.frames.empty()) throw UsageError("--frames is required");
  EstimatorConfig cfg;
  cfg.optimizer = parseOptimizer(o.optimizer);
  cfg.init = parseInit(o.init);
  cfg.maxOuterIters = o.maxOuterIters;
  cfg.shiftTol = o.shiftTol;
  cfg.newtonIters = o.newtonIters;
  cfg.randomInitHalfRange = o.randomInitHalfRange;
  cfg.seed = o.seed;
  const bool constrained = o.method == "constrained";
  if (!constrained) cfg.method = parseMethod(o.method);
  validateFlags(cfg);

  const std::vector<PixelGrid> frames = loadChannel(o.frames, o.channel);
  const std::vector<Spectrum> spectra = toSpectra(frames);
  const int k = static_cast<int>(frames.size()) - 1;
  const bool needsPrior = cfg.method == Method::Map || (constrained && o.prefilter == "wiener");
  const double sigma2 = o.sigma2 ? *o.sigma2 : (needsPrior ? noiseVarianceOrNominal(frames) : 0.0);

  ShiftSet shifts;
  double cost = 0.0;
  int iterations = 0;
  bool converged = true;
  if (constrained) {
    const CostWeights w = needsPrior ? CostWeights::wiener(fittedPrior(spectra, sigma2), k + 1)
                                     : CostWeights::identity(frames.front().rows(), frames.front().cols());
    shifts = estimateConstrained(spectra, w, cfg.newtonIters).shifts;
    cost = commonCost(spectra, shifts, w);
  } else {
    std::optional<PriorSpectrum> prior;
    if (needsPrior) prior = fittedPrior(spectra, sigma2);
    const EstimateResult r = estimate(spectra, cfg, prior);
    shifts = r.shifts;
    cost = r.finalCost;
    iterations = r.iterations;
    converged = r.converged;
  }

  printShifts(out, shifts);
  out << "cost " << number(cost) << '\n' << "iterations " << iterations << '\n' << "converged " << converged << '\n';
  if (needsPrior) out << "sigma2 " << number(sigma2) << '\n';
  if (!o.truthManifest.empty()) {
    const ShiftSet truth = readShiftManifest(o.truthManifest);
    if (truth.rows() != shifts.rows()) throw InvalidInput("truth manifest frame count does not match the frames");
    double total = 0.0;
    for (int i = 1; i <= k; ++i) {
      const Shift2D d = shifts.row(i).transpose() - truth.row(i).transpose();
      total += wrapShift(d, frames.front().rows(), frames.front().cols()).squaredNorm();
    }
    out << "mse " << number(total / k) << '\n';
  }
  return kOk;
}

// ---- bench ----------------------------------------------------------------

struct BenchOptions {
  std::string spec;
  std::string out;
  std::string plot;
  bool noTiming = false;
  std::optional<std::uint64_t> seed;
};

void addBench(CLI::App& app, BenchOptions& o) {
  app.add_option("--spec", o.spec, "Sweep spec (key=value lines)");
  app.add_option("--out", o.out, "CSV output path");
  app.add_option("--plot", o.plot, "Also write a gnuplot script here");
  app.add_flag("--no-timing", o.noTiming, "Write wall_s as 0 for byte-comparable output");
  app.add_option("--seed", o.seed, "Overrides the spec's base seed");
}

int runBench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  if (o.spec.empty()) throw UsageError("--spec is required");
  if (o.out.empty()) throw UsageError("--out is required");
  SweepSpec spec;
  try {
    spec = loadSweepSpec(o.spec);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
  if (o.seed) spec.baseSeed = *o.seed;
  if (o.noTiming) spec.recordTiming = false;

  const SweepResult result = runSweep(spec, [&err](const SweepCell& c, std::size_t done, std::size_t total) {
    err << '[' << done << '/' << total << "] " << c.key.truth << " snr=" << number(c.key.snrDb) << " k=" << c.key.k
        << ' ' << c.key.method.key() << " mse=" << fmt("%.6g", c.stats.mseMean) << '\n';
  });
  emitCsv(result, fs::path(o.out));
  if (!o.plot.empty()) {
    std::ofstream plot(o.plot);
    if (!plot) throw IoError("cannot write " + o.plot);
    emitPlotScript(result, o.out, plot);
  }
  for (const auto& e : result.errors) err << "error: " << e << '\n';
  out << "cells " << result.cells.size() << '\n';
  return result.errors.empty() ? kOk : kDataError;
}

// ---- align-burst ----------------------------------------------------------

struct AlignOptions {
  std::string frames;
  std::optional<int> patchX;
  std::optional<int> patchY;
  int patchSize = 128;
  std::string method = "map";
  std::string optimizer = "ccd";
  std::string init = "pairwise";
  std::optional<double> sigma2;
  int channel = 0;
  std::string out;
  std::uint64_t seed = 0;
};

void addAlign(CLI::App& app, AlignOptions& o) {
  app.add_option("--frames", o.frames, "Directory of burst frames (frame 0 is the reference)");
  app.add_option("--patch-x", o.patchX, "Patch left column (default: centred)");
  app.add_option("--patch-y", o.patchY, "Patch top row (default: centred)");
  app.add_option("--patch-size", o.patchSize, "Square patch side in pixels")->check(CLI::Range(4, 1 << 20));
  app.add_option("--method", o.method, "mle or map")->check(CLI::IsMember({"mle", "map"}));
  app.add_option("--optimizer", o.optimizer, "ccd or vp")->check(CLI::IsMember({"ccd", "vp"}));
  app.add_option("--init", o.init, "pairwise or random")->check(CLI::IsMember({"pairwise", "random"}));
  app.add_option("--sigma2", o.sigma2, "Noise variance (estimated from the patches when omitted)")
      ->check(CLI::PositiveNumber);
  app.add_option("--channel", o.channel, "Channel used for estimation")->check(CLI::NonNegativeNumber);
  app.add_option("--out", o.out, "Aligned average (16-bit PNG for .png, else PGM/PPM)");
  app.add_option("--seed", o.seed, "Seed for random initialisation");
}

int runAlign(const AlignOptions& o, std::ostream& out) {
  if (o.frames.empty()) throw UsageError("--frames is required");
  if (o.out.empty()) throw UsageError("--out is required");
  EstimatorConfig cfg;
  cfg.method = parseMethod(o.method);
  cfg.optimizer = parseOptimizer(o.optimizer);
  cfg.init = parseInit(o.init);
  cfg.seed = o.seed;
  validateFlags(cfg);

  const std::vector<Image> images = readFrameDirectory(o.frames);
  if (images.size() < 2) throw InvalidInput("need at least two frames in " + o.frames);
  const Eigen::Index h = images.front().height();
  const Eigen::Index w = images.front().width();
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w || img.channels.size() != images.front().channels.size()) {
      throw InvalidInput("frame size mismatch in " + o.frames);
    }
  }
  if (o.channel >= static_cast<int>(images.front().channels.size())) {
    throw InvalidInput("frames have no channel " + std::to_string(o.channel));
  }
  const int size = o.patchSize;
  const Eigen::Index x = o.patchX ? *o.patchX : (w - size) / 2;
  const Eigen::Index y = o.patchY ? *o.patchY : (h - size) / 2;
  if (x < 0 || y < 0 || x + size > w || y + size > h) {
    throw InvalidInput("patch exceeds frame bounds (" + std::to_string(w) + "x" + std::to_string(h) + ")");
  }

  std::vector<PixelGrid> patches;
  for (const auto& img : images) {
    PixelGrid p = periodicComponent(img.channels[o.channel].block(y, x, size, size));
    p -= p.mean();
    patches.push_back(std::move(p));
  }
  const std::vector<Spectrum> spectra = toSpectra(patches);
  const int k = static_cast<int>(patches.size()) - 1;
  const double sigma2 = o.sigma2 ? *o.sigma2 : noiseVarianceOrNominal(patches);

  std::optional<PriorSpectrum> prior;
  if (cfg.method == Method::Map) prior = fittedPrior(spectra, sigma2);
  const EstimateResult r = estimate(spectra, cfg, prior);

  std::vector<PixelGrid> average;
  for (std::size_t c = 0; c < images.front().channels.size(); ++c) {
    std::vector<Spectrum> full;
    for (const auto& img : images) full.push_back(forwardTransform(img.channels[c]));
    average.push_back(reconstructLatent(full, r.shifts, CostWeights::identity(h, w)));
  }
  const int maxValue = images.front().maxValue;
  const SampleEncoding enc = maxValue > 0 ? SampleEncoding{0.0, 65535.0 / maxValue} : rangeEncoding(average);
  writeImage(o.out, average, enc);

  printShifts(out, r.shifts);
  out << "sigma2 " << number(sigma2) << '\n';
  if (prior) out << "amplitude " << number(prior->amplitude) << '\n';
  out << "patch " << x << ' ' << y << ' ' << size << '\n' << "frames " << k + 1 << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-frame translation estimation and benchmarking"};
  app.require_subcommand(1);

  SynthOptions synth;
  EstimateOptions est;
  BenchOptions bench;
  AlignOptions align;
  std::string synthCfg, estCfg, benchCfg, alignCfg;

  auto* synthCmd = app.add_subcommand("synth", "Generate a synthetic shifted, noisy stack");
  addSynth(*synthCmd, synth);
  synthCmd->add_option("--config", synthCfg, "key=value file; command-line flags win");
  auto* estCmd = app.add_subcommand("estimate", "Estimate the shifts of a frame stack");
  addEstimate(*estCmd, est);
  estCmd->add_option("--config", estCfg, "key=value file; command-line flags win");
  auto* benchCmd = app.add_subcommand("bench", "Run an MSE-versus-SNR sweep");
  addBench(*benchCmd, bench);
  benchCmd->add_option("--config", benchCfg, "key=value file; command-line flags win");
  auto* alignCmd = app.add_subcommand("align-burst", "Align a burst on a patch and average it");
  addAlign(*alignCmd, align);
  alignCmd->add_option("--config", alignCfg, "key=value file; command-line flags win");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    if (synthCmd->parsed()) {
      if (!synthCfg.empty()) applyConfig(*synthCmd, synthCfg);
      return runSynth(synth, out);
    }
    if (estCmd->parsed()) {
      if (!estCfg.empty()) applyConfig(*estCmd, estCfg);
      return runEstimate(est, out);
    }
    if (benchCmd->parsed()) {
      if (!benchCfg.empty()) applyConfig(*benchCmd, benchCfg);
      return runBench(bench, out, err);
    }
    if (!alignCfg.empty()) applyConfig(*alignCmd, alignCfg);
    return runAlign(align, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "; offending keys:";
    for (const auto& k : e.offendingKeys) err << ' ' << k;
    err << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace shiftbench::cli
