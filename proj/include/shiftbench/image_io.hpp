#ifndef SHIFTBENCH_IMAGE_IO_HPP
#define SHIFTBENCH_IMAGE_IO_HPP

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "shiftbench/types.hpp"

namespace shiftbench {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoded raster: one grid per channel, samples in [0, maxValue].
struct Image {
  std::vector<PixelGrid> channels;
  int maxValue = 255;

  Eigen::Index height() const { return channels.empty() ? 0 : channels.front().rows(); }
  Eigen::Index width() const { return channels.empty() ? 0 : channels.front().cols(); }
};

/// 8/16-bit PGM (P2, P5), PPM (P3, P6) or PNG (gray, gray+alpha, RGB, RGBA,
/// palette; alpha is dropped). Format is detected from the file contents.
Image readImage(const std::filesystem::path& path);

/// Linear map from real samples to 16-bit codes: code = round((v - offset) * scale),
/// clamped to [0, 65535].
struct SampleEncoding {
  double offset = 0.0;
  double scale = 1.0;

  double decode(double code) const { return code / scale + offset; }
};

/// Writes 16-bit PNG for ".png", otherwise binary PGM (one channel) / PPM (three).
void writeImage(const std::filesystem::path& path, const std::vector<PixelGrid>& channels, const SampleEncoding& enc);

/// Lossless plain-text grid: one image row per line, tab separated, 17 significant digits.
void writeGridText(const std::filesystem::path& path, const PixelGrid& g);
PixelGrid readGridText(const std::filesystem::path& path);

/// Shift manifest: one "index tx ty" line per frame, 9 significant digits.
void writeShiftManifest(const std::filesystem::path& path, const ShiftSet& shifts);
ShiftSet readShiftManifest(const std::filesystem::path& path);

/// Rounds every shift to the value a manifest line reproduces exactly.
ShiftSet roundToManifestPrecision(const ShiftSet& shifts);

/// Frames of a directory in file-name order. Lossless ".tsv" grids take
/// precedence; otherwise every .pgm/.ppm/.png image is loaded.
std::vector<Image> readFrameDirectory(const std::filesystem::path& dir);

}  // namespace shiftbench

#endif  // SHIFTBENCH_IMAGE_IO_HPP
