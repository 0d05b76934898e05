#ifndef FRID_OPTFLOW_HPP_
#define FRID_OPTFLOW_HPP_

#include <Eigen/Core>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "frid/common.hpp"
#include "frid/image.hpp"
#include "frid/tensor.hpp"

namespace frid {

// Dense per-pixel displacement in pixels. u is horizontal (+x right),
// v vertical (+y down); extents match the source frame pair.
struct FlowField {
  Array2d u, v;

  Eigen::Index height() const { return u.rows(); }
  Eigen::Index width() const { return u.cols(); }

  static FlowField zero(Eigen::Index h, Eigen::Index w) {
    return {Array2d::Zero(h, w), Array2d::Zero(h, w)};
  }
};

struct FlowParams {
  double alpha = 0.1;   // smoothness weight
  int iterations = 100;  // Jacobi sweeps
  double cap = 16.0;     // |u|,|v| clamp after estimation, pixels
};

// Classical Horn-Schunck estimation between two grayscale frames with
// values in [0,1]. Derivatives use the standard 2x2x2 stencil; updates are
// Jacobi sweeps of
//   u = ubar - Ix (Ix ubar + Iy vbar + It) / (alpha^2 + Ix^2 + Iy^2)
// with the original 8-neighbour averaging kernel.
inline FlowField estimate_flow(const Array2d& prev, const Array2d& next,
                               const FlowParams& params = {}) {
  if (prev.rows() != next.rows() || prev.cols() != next.cols())
    throw ShapeError("estimate_flow: frame extents differ: " +
                     std::to_string(prev.rows()) + "x" +
                     std::to_string(prev.cols()) + " vs " +
                     std::to_string(next.rows()) + "x" +
                     std::to_string(next.cols()));
  if (!prev.allFinite() || !next.allFinite())
    throw NumericError("estimate_flow: non-finite pixel values");
  const Eigen::Index h = prev.rows(), w = prev.cols();

  auto at = [&](const Array2d& im, Eigen::Index y, Eigen::Index x) {
    return im(std::min(y, h - 1), std::min(x, w - 1));
  };

  Array2d ix(h, w), iy(h, w), it(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      ix(y, x) = 0.25 * (at(prev, y, x + 1) - at(prev, y, x) +
                         at(prev, y + 1, x + 1) - at(prev, y + 1, x) +
                         at(next, y, x + 1) - at(next, y, x) +
                         at(next, y + 1, x + 1) - at(next, y + 1, x));
      iy(y, x) = 0.25 * (at(prev, y + 1, x) - at(prev, y, x) +
                         at(prev, y + 1, x + 1) - at(prev, y, x + 1) +
                         at(next, y + 1, x) - at(next, y, x) +
                         at(next, y + 1, x + 1) - at(next, y, x + 1));
      it(y, x) = 0.25 * (at(next, y, x) - at(prev, y, x) +
                         at(next, y + 1, x) - at(prev, y + 1, x) +
                         at(next, y, x + 1) - at(prev, y, x + 1) +
                         at(next, y + 1, x + 1) - at(prev, y + 1, x + 1));
    }

  const Array2d denom =
      params.alpha * params.alpha + ix.square() + iy.square();

  Array2d u = Array2d::Zero(h, w), v = Array2d::Zero(h, w);
  Array2d ubar(h, w), vbar(h, w);
  auto local_average = [&](const Array2d& f, Array2d& out) {
    auto fat = [&](Eigen::Index y, Eigen::Index x) {
      y = std::clamp<Eigen::Index>(y, 0, h - 1);
      x = std::clamp<Eigen::Index>(x, 0, w - 1);
      return f(y, x);
    };
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x)
        out(y, x) =
            (fat(y - 1, x) + fat(y + 1, x) + fat(y, x - 1) + fat(y, x + 1)) /
                6.0 +
            (fat(y - 1, x - 1) + fat(y - 1, x + 1) + fat(y + 1, x - 1) +
             fat(y + 1, x + 1)) /
                12.0;
  };

  for (int iter = 0; iter < params.iterations; ++iter) {
    local_average(u, ubar);
    local_average(v, vbar);
    const Array2d common = (ix * ubar + iy * vbar + it) / denom;
    u = ubar - ix * common;
    v = vbar - iy * common;
  }

  u = u.min(params.cap).max(-params.cap);
  v = v.min(params.cap).max(-params.cap);
  return {std::move(u), std::move(v)};
}

// Flow fields for a whole clip, one per frame: flow[t] pairs frame t with
// frame t+1; the last field replicates its predecessor so counts stay n-for-n
// with the frames.
inline std::vector<FlowField> clip_flow(const std::vector<Array2d>& frames,
                                        const FlowParams& params = {}) {
  if (frames.size() < 2)
    throw UsageError("clip_flow: need at least 2 frames, got " +
                     std::to_string(frames.size()));
  std::vector<FlowField> fields;
  fields.reserve(frames.size());
  for (std::size_t t = 0; t + 1 < frames.size(); ++t)
    fields.push_back(estimate_flow(frames[t], frames[t + 1], params));
  fields.push_back(fields.back());
  return fields;
}

// Network encoding of a flow field: 2 channels (u, v) scaled by 1/cap
// into [-1, 1].
template <typename S>
Tensor<S> flow_to_input(const FlowField& flow, double cap = 16.0) {
  const Eigen::Index h = flow.height(), w = flow.width();
  typename Tensor<S>::Storage data(2 * h * w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      data[y * w + x] = static_cast<S>(flow.u(y, x) / cap);
      data[h * w + y * w + x] = static_cast<S>(flow.v(y, x) / cap);
    }
  return Tensor<S>::from_storage({2, h, w}, std::move(data));
}

// Middlebury ".flo": "PIEH", width/height as LE i32, row-major interleaved
// (u,v) LE f32.
void write_flo(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flo(const std::filesystem::path& path);

}  // namespace frid

#endif  // FRID_OPTFLOW_HPP_
