#include "frid/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "frid/common.hpp"

namespace frid {

namespace {

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct PnmHeader {
  Eigen::Index w = 0, h = 0;
  int maxval = 0;
};

PnmHeader read_header(std::istream& is, const std::string& magic,
                      const std::filesystem::path& path) {
  const std::string m = next_token(is);
  if (m != magic)
    throw IoError(path.string() + ": expected " + magic + ", found '" + m +
                  "'");
  PnmHeader h;
  h.w = std::stoll(next_token(is));
  h.h = std::stoll(next_token(is));
  h.maxval = std::stoi(next_token(is));
  if (h.w <= 0 || h.h <= 0 || h.maxval != 255)
    throw IoError(path.string() + ": unsupported PNM geometry or maxval");
  return h;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ImageRgb& im) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P6\n" << im.width() << " " << im.height() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(im.width()) * 3);
  for (Eigen::Index y = 0; y < im.height(); ++y) {
    for (Eigen::Index x = 0; x < im.width(); ++x) {
      row[3 * x + 0] = to_byte(im.r(y, x));
      row[3 * x + 1] = to_byte(im.g(y, x));
      row[3 * x + 2] = to_byte(im.b(y, x));
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

ImageRgb read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open: " + path.string());
  const PnmHeader h = read_header(is, "P6", path);
  ImageRgb im{Array2d(h.h, h.w), Array2d(h.h, h.w), Array2d(h.h, h.w)};
  std::vector<std::uint8_t> row(static_cast<std::size_t>(h.w) * 3);
  for (Eigen::Index y = 0; y < h.h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!is) throw IoError("truncated PPM: " + path.string());
    for (Eigen::Index x = 0; x < h.w; ++x) {
      im.r(y, x) = row[3 * x + 0] / 255.0;
      im.g(y, x) = row[3 * x + 1] / 255.0;
      im.b(y, x) = row[3 * x + 2] / 255.0;
    }
  }
  return im;
}

void write_pgm(const std::filesystem::path& path, const ImageGray& im) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P5\n" << im.width() << " " << im.height() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(im.width()));
  for (Eigen::Index y = 0; y < im.height(); ++y) {
    for (Eigen::Index x = 0; x < im.width(); ++x) row[x] = to_byte(im.v(y, x));
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw IoError("write failed: " + path.string());
}

ImageGray read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open: " + path.string());
  const PnmHeader h = read_header(is, "P5", path);
  ImageGray im{Array2d(h.h, h.w)};
  std::vector<std::uint8_t> row(static_cast<std::size_t>(h.w));
  for (Eigen::Index y = 0; y < h.h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!is) throw IoError("truncated PGM: " + path.string());
    for (Eigen::Index x = 0; x < h.w; ++x) im.v(y, x) = row[x] / 255.0;
  }
  return im;
}

Array2d resize_bilinear(const Array2d& in, Eigen::Index out_h,
                        Eigen::Index out_w) {
  if (in.rows() == out_h && in.cols() == out_w) return in;
  Array2d out(out_h, out_w);
  const double sy = static_cast<double>(in.rows()) / out_h;
  const double sx = static_cast<double>(in.cols()) / out_w;
  for (Eigen::Index y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const Eigen::Index y0 = std::min<Eigen::Index>(in.rows() - 1,
                                                   static_cast<Eigen::Index>(fy));
    const Eigen::Index y1 = std::min<Eigen::Index>(in.rows() - 1, y0 + 1);
    const double wy = fy - y0;
    for (Eigen::Index x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const Eigen::Index x0 = std::min<Eigen::Index>(in.cols() - 1,
                                                     static_cast<Eigen::Index>(fx));
      const Eigen::Index x1 = std::min<Eigen::Index>(in.cols() - 1, x0 + 1);
      const double wx = fx - x0;
      out(y, x) = (1 - wy) * ((1 - wx) * in(y0, x0) + wx * in(y0, x1)) +
                  wy * ((1 - wx) * in(y1, x0) + wx * in(y1, x1));
    }
  }
  return out;
}

ImageRgb resize_bilinear(const ImageRgb& in, Eigen::Index out_h,
                         Eigen::Index out_w) {
  return {resize_bilinear(in.r, out_h, out_w),
          resize_bilinear(in.g, out_h, out_w),
          resize_bilinear(in.b, out_h, out_w)};
}

}  // namespace frid
