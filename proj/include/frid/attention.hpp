#ifndef FRID_ATTENTION_HPP_
#define FRID_ATTENTION_HPP_

#include <random>
#include <string>
#include <utility>

#include "frid/backbone.hpp"
#include "frid/ops.hpp"

namespace frid {

// 1x1 convolution C -> 1 with ReLU; one per stream.
template <typename S>
struct ProjectionHead {
  Conv2dLayer<S> conv;

  static ProjectionHead make(int channels, std::mt19937_64& rng) {
    ProjectionHead p;
    p.conv = Conv2dLayer<S>::make(1, channels, 1, 1, 0, rng);
    return p;
  }

  Tensor<S> operator()(const Tensor<S>& features) const {
    return relu(conv(features));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    conv.visit(prefix + ".conv", fn);
  }
};

// Mutual attention map between the streams' stage features: the per-pixel
// product of the projected maps, squashed by a sigmoid. Values therefore lie
// in [0.5, 1): projections are non-negative after ReLU, so the correlation
// cannot be negative. Computed per frame; no temporal mixing.
template <typename S>
Tensor<S> mutual_attention_map(const Tensor<S>& phi_l, const Tensor<S>& f_l,
                               const ProjectionHead<S>& zeta_app,
                               const ProjectionHead<S>& zeta_flow) {
  if (phi_l.shape() != f_l.shape())
    throw ShapeError("mutual_attention_map: stream features differ: " +
                     shape_str(phi_l.shape()) + " vs " +
                     shape_str(f_l.shape()));
  Tensor<S> rho = mul(zeta_app(phi_l), zeta_flow(f_l));
  return sigmoid_open(rho);
}

// Both streams are gated by the same map (channel broadcast).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> apply_mutual_attention(const Tensor<S>& phi_l,
                                                       const Tensor<S>& f_l,
                                                       const Tensor<S>& map) {
  return {channel_scale(phi_l, map), channel_scale(f_l, map)};
}

// Shallow flow CNN of the gated baseline: three strided 3x3 conv+ReLU
// stages keeping spatial coherence.
template <typename S>
struct ShallowFlowCnn {
  Conv2dLayer<S> c1, c2, c3;

  static ShallowFlowCnn make(int in_channels, std::mt19937_64& rng) {
    ShallowFlowCnn s;
    s.c1 = Conv2dLayer<S>::make(8, in_channels, 3, 2, 1, rng);
    s.c2 = Conv2dLayer<S>::make(16, 8, 3, 2, 1, rng);
    s.c3 = Conv2dLayer<S>::make(32, 16, 3, 2, 1, rng);
    return s;
  }

  // Features resized (nearest-neighbour) to the target spatial extent of
  // the image stream's inject stage.
  Tensor<S> operator()(const Tensor<S>& flow_input, Eigen::Index out_h,
                       Eigen::Index out_w) const {
    Tensor<S> x = relu(c1(flow_input));
    x = relu(c2(x));
    x = relu(c3(x));
    return resize_nearest(x, out_h, out_w);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    c1.visit(prefix + ".c1", fn);
    c2.visit(prefix + ".c2", fn);
    c3.visit(prefix + ".c3", fn);
  }
};

// Gated attention baseline: channel-pooled flow features, sigmoid gate,
// applied to the image stream only.
template <typename S>
Tensor<S> gated_attention(const Tensor<S>& psi_l,
                          const Tensor<S>& flow_features) {
  if (flow_features.rank() != 4 || psi_l.rank() != 4 ||
      flow_features.dim(0) != psi_l.dim(0) ||
      flow_features.dim(2) != psi_l.dim(2) ||
      flow_features.dim(3) != psi_l.dim(3))
    throw ShapeError("gated_attention: flow features " +
                     shape_str(flow_features.shape()) +
                     " do not align with image features " +
                     shape_str(psi_l.shape()));
  Tensor<S> pooled = reduce_mean(flow_features, {1});  // T x I x J
  Tensor<S> gate = sigmoid_open(reshape(
      pooled, {psi_l.dim(0), 1, psi_l.dim(2), psi_l.dim(3)}));
  return channel_scale(psi_l, gate);
}

}  // namespace frid

#endif  // FRID_ATTENTION_HPP_
