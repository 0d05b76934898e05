#ifndef FRID_IMAGE_HPP_
#define FRID_IMAGE_HPP_

#include <Eigen/Core>

#include <filesystem>
#include <string>

namespace frid {

using Array2d = Eigen::ArrayXXd;

// Planar RGB image with values in [0,1].
struct ImageRgb {
  Array2d r, g, b;

  Eigen::Index height() const { return r.rows(); }
  Eigen::Index width() const { return r.cols(); }

  static ImageRgb constant(Eigen::Index h, Eigen::Index w, double v) {
    return {Array2d::Constant(h, w, v), Array2d::Constant(h, w, v),
            Array2d::Constant(h, w, v)};
  }
};

// Single-plane image, same convention.
struct ImageGray {
  Array2d v;

  Eigen::Index height() const { return v.rows(); }
  Eigen::Index width() const { return v.cols(); }
};

// Rec.601 luma, used before classical flow estimation.
inline ImageGray luma(const ImageRgb& im) {
  return {0.299 * im.r + 0.587 * im.g + 0.114 * im.b};
}

// Binary PPM (P6) / PGM (P5), 8-bit. Values are clamped to [0,1] on write
// and scaled by 1/255 on read.
void write_ppm(const std::filesystem::path& path, const ImageRgb& im);
ImageRgb read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const ImageGray& im);
ImageGray read_pgm(const std::filesystem::path& path);

Array2d resize_bilinear(const Array2d& in, Eigen::Index out_h,
                        Eigen::Index out_w);
ImageRgb resize_bilinear(const ImageRgb& in, Eigen::Index out_h,
                         Eigen::Index out_w);

}  // namespace frid

#endif  // FRID_IMAGE_HPP_
