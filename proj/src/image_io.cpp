#include "shiftbench/image_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <png.h>

namespace shiftbench {

namespace fs = std::filesystem;

namespace {

std::string readAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- PNM ----------------------------------------------------------------

struct PnmCursor {
  const std::string& data;
  std::size_t pos = 0;

  void skipSpaceAndComments() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long nextInt() {
    skipSpaceAndComments();
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw IoError("malformed PNM header");
    return std::stol(data.substr(start, pos - start));
  }
};

Image decodePnm(const std::string& data, const fs::path& path) {
  const char kind = data[1];
  const bool ascii = kind == '2' || kind == '3';
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  PnmCursor cur{data};
  cur.pos = 2;
  const long width = cur.nextInt();
  const long height = cur.nextInt();
  const long maxval = cur.nextInt();
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) throw IoError("bad PNM header in " + path.string());

  Image img;
  img.maxValue = static_cast<int>(maxval);
  img.channels.assign(channels, PixelGrid(height, width));
  if (ascii) {
    for (long r = 0; r < height; ++r)
      for (long c = 0; c < width; ++c)
        for (int ch = 0; ch < channels; ++ch) img.channels[ch](r, c) = static_cast<double>(cur.nextInt());
    return img;
  }
  ++cur.pos;  // single whitespace after maxval
  const int bytes = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(width * height * channels * bytes);
  if (data.size() < cur.pos + need) throw IoError("truncated PNM data in " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + cur.pos);
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        const unsigned v = bytes == 1 ? p[0] : (static_cast<unsigned>(p[0]) << 8 | p[1]);
        img.channels[ch](r, c) = static_cast<double>(v);
        p += bytes;
      }
    }
  }
  return img;
}

void writePnm(const fs::path& path, const std::vector<std::vector<std::uint16_t>>& planes, Eigen::Index h,
              Eigen::Index w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (planes.size() == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n65535\n";
  for (Eigen::Index i = 0; i < h * w; ++i) {
    for (const auto& plane : planes) {
      const std::uint16_t v = plane[static_cast<std::size_t>(i)];
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// ---- PNG ----------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void pngError(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

void pngWarning(png_structp, png_const_charp) {}

Image decodePng(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, pngError, pngWarning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }

  Image img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode error in " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const int bytes = depth == 16 ? 2 : 1;
  img.maxValue = depth == 16 ? 65535 : 255;
  img.channels.assign(channels, PixelGrid(height, width));
  for (png_uint_32 r = 0; r < height; ++r) {
    const unsigned char* p = rows[r];
    for (png_uint_32 c = 0; c < width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        const unsigned v = bytes == 1 ? p[0] : (static_cast<unsigned>(p[0]) << 8 | p[1]);
        img.channels[ch](r, c) = static_cast<double>(v);
        p += bytes;
      }
    }
  }
  return img;
}

void writePng(const fs::path& path, const std::vector<std::vector<std::uint16_t>>& planes, Eigen::Index h,
              Eigen::Index w) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, pngError, pngWarning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const auto channels = planes.size();
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode error in " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Eigen::Index r = 0; r < h; ++r) {
    unsigned char* p = row.data();
    for (Eigen::Index c = 0; c < w; ++c) {
      for (const auto& plane : planes) {
        const std::uint16_t v = plane[static_cast<std::size_t>(r * w + c)];
        *p++ = static_cast<unsigned char>(v >> 8);
        *p++ = static_cast<unsigned char>(v & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::string lowerExtension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::string formatShift(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.9g", v);
  return buf.data();
}

}  // namespace

Image readImage(const fs::path& path) {
  const std::string data = readAll(path);
  if (data.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) == 0) {
    return decodePng(path);
  }
  if (data.size() >= 2 && data[0] == 'P' && std::string("2356").find(data[1]) != std::string::npos) {
    return decodePnm(data, path);
  }
  throw IoError("unsupported image format: " + path.string());
}

void writeImage(const fs::path& path, const std::vector<PixelGrid>& channels, const SampleEncoding& enc) {
  if (channels.size() != 1 && channels.size() != 3) throw IoError("images must have 1 or 3 channels");
  const Eigen::Index h = channels.front().rows();
  const Eigen::Index w = channels.front().cols();
  std::vector<std::vector<std::uint16_t>> planes;
  for (const auto& ch : channels) {
    if (ch.rows() != h || ch.cols() != w) throw IoError("channel size mismatch");
    std::vector<std::uint16_t> plane(static_cast<std::size_t>(h * w));
    for (Eigen::Index r = 0; r < h; ++r) {
      for (Eigen::Index c = 0; c < w; ++c) {
        const double code = std::clamp(std::round((ch(r, c) - enc.offset) * enc.scale), 0.0, 65535.0);
        plane[static_cast<std::size_t>(r * w + c)] = static_cast<std::uint16_t>(code);
      }
    }
    planes.push_back(std::move(plane));
  }
  if (lowerExtension(path) == ".png") writePng(path, planes, h, w);
  else writePnm(path, planes, h, w);
}

void writeGridText(const fs::path& path, const PixelGrid& g) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) std::fprintf(f, c == 0 ? "%.17g" : "\t%.17g", g(r, c));
    std::fputc('\n', f);
  }
  std::fclose(f);
}

PixelGrid readGridText(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    std::string token;
    while (ls >> token) row.push_back(std::stod(token));
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) throw IoError("ragged grid in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty grid in " + path.string());
  PixelGrid g(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rows[r][c];
  return g;
}

void writeShiftManifest(const fs::path& path, const ShiftSet& shifts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < shifts.rows(); ++i) {
    out << i << " " << formatShift(shifts(i, 0)) << " " << formatShift(shifts(i, 1)) << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ShiftSet readShiftManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::array<double, 2>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long index = 0;
    double tx = 0.0;
    double ty = 0.0;
    if (!(ls >> index >> tx >> ty)) throw IoError("malformed manifest line: " + line);
    if (index != static_cast<long>(entries.size())) throw IoError("manifest indices must be 0, 1, 2, ...");
    entries.push_back({tx, ty});
  }
  if (entries.empty()) throw IoError("empty manifest " + path.string());
  ShiftSet s(static_cast<Eigen::Index>(entries.size()), 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << entries[i][0], entries[i][1];
  return s;
}

ShiftSet roundToManifestPrecision(const ShiftSet& shifts) {
  ShiftSet out = shifts;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = std::stod(formatShift(out(i)));
  return out;
}

std::vector<Image> readFrameDirectory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> grids;
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lowerExtension(entry.path());
    if (ext == ".tsv") grids.push_back(entry.path());
    else if (ext == ".pgm" || ext == ".ppm" || ext == ".png") images.push_back(entry.path());
  }
  std::vector<Image> frames;
  if (!grids.empty()) {
    std::sort(grids.begin(), grids.end());
    for (const auto& p : grids) frames.push_back(Image{{readGridText(p)}, 0});
  } else {
    std::sort(images.begin(), images.end());
    for (const auto& p : images) frames.push_back(readImage(p));
  }
  if (frames.empty()) throw IoError("no frames found in " + dir.string());
  return frames;
}

}  // namespace shiftbench
