#include "frid/optflow.hpp"

#include <fstream>

#include "frid/binio.hpp"

namespace frid {

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  binio::write_bytes(os, "PIEH");
  binio::write_i32(os, static_cast<std::int32_t>(flow.width()));
  binio::write_i32(os, static_cast<std::int32_t>(flow.height()));
  for (Eigen::Index y = 0; y < flow.height(); ++y)
    for (Eigen::Index x = 0; x < flow.width(); ++x) {
      binio::write_f32(os, static_cast<float>(flow.u(y, x)));
      binio::write_f32(os, static_cast<float>(flow.v(y, x)));
    }
  if (!os) throw IoError("write failed: " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open: " + path.string());
  if (binio::read_bytes(is, 4) != "PIEH")
    throw IoError(path.string() + ": not a .flo file");
  const std::int32_t w = binio::read_i32(is);
  const std::int32_t h = binio::read_i32(is);
  if (w <= 0 || h <= 0)
    throw IoError(path.string() + ": invalid flow extents");
  FlowField f = FlowField::zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      f.u(y, x) = binio::read_f32(is);
      f.v(y, x) = binio::read_f32(is);
    }
  return f;
}

}  // namespace frid
