#ifndef FRID_BACKBONE_HPP_
#define FRID_BACKBONE_HPP_

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "frid/ops.hpp"
#include "frid/tensor.hpp"

namespace frid {

// Visitor over named parameters; name paths are unique within a model.
template <typename S>
using ParamVisitor =
    std::function<void(const std::string& name, Tensor<S>& tensor)>;

template <typename S>
struct Conv2dLayer {
  Tensor<S> weight;  // O x C x kh x kw
  Tensor<S> bias;    // O
  int stride = 1;
  int padding = 0;

  static Conv2dLayer make(int out_ch, int in_ch, int k, int stride,
                          int padding, std::mt19937_64& rng) {
    Conv2dLayer l;
    const S std = static_cast<S>(std::sqrt(2.0 / (in_ch * k * k)));
    l.weight = Tensor<S>::randn({out_ch, in_ch, k, k}, rng, std, true);
    l.bias = Tensor<S>::zeros({out_ch}, true);
    l.stride = stride;
    l.padding = padding;
    return l;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return conv2d(x, weight, bias, stride, padding);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", weight);
    fn(prefix + ".b", bias);
  }
};

template <typename S>
struct LinearLayer {
  Tensor<S> weight;  // Dout x Din
  Tensor<S> bias;    // Dout

  static LinearLayer make(int dout, int din, std::mt19937_64& rng) {
    LinearLayer l;
    const S std = static_cast<S>(std::sqrt(2.0 / din));
    l.weight = Tensor<S>::randn({dout, din}, rng, std, true);
    l.bias = Tensor<S>::zeros({dout}, true);
    return l;
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return fully_connected(x, weight, bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", weight);
    fn(prefix + ".b", bias);
  }
};

struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> stage_channels{16, 32, 64, 128, 128};
  int inject_stage = 4;  // attention must precede at least one later stage
  int descriptor_dim = 128;
  bool use_se = false;
  int se_reduction = 4;

  int num_stages() const { return static_cast<int>(stage_channels.size()); }

  void validate() const {
    if (in_channels < 1) throw UsageError("backbone: in_channels must be >= 1");
    if (stage_channels.empty())
      throw UsageError("backbone: stage_channels must not be empty");
    for (int c : stage_channels)
      if (c < 1) throw UsageError("backbone: stage channels must be >= 1");
    if (inject_stage < 1 || inject_stage >= num_stages())
      throw UsageError(
          "backbone: inject_stage must lie in [1," +
          std::to_string(num_stages() - 1) +
          "] so attention precedes at least one further stage, got " +
          std::to_string(inject_stage));
    if (descriptor_dim < 4 || descriptor_dim % 4 != 0)
      throw UsageError("backbone: descriptor_dim must be a multiple of 4");
    if (use_se) {
      if (se_reduction < 1) throw UsageError("backbone: se_reduction >= 1");
      for (int c : stage_channels)
        if (c % se_reduction != 0)
          throw UsageError("backbone: stage channels must be divisible by "
                           "the SE reduction");
    }
  }
};

// Channel gates from global context: pool -> FC C->C/r -> ReLU ->
// FC C/r->C -> sigmoid -> per-channel scale.
template <typename S>
struct SqueezeExcite {
  LinearLayer<S> squeeze;  // C -> C/r
  LinearLayer<S> excite;   // C/r -> C

  static SqueezeExcite make(int channels, int reduction,
                            std::mt19937_64& rng) {
    if (channels % reduction != 0)
      throw UsageError("squeeze_excitation: " + std::to_string(channels) +
                       " channels not divisible by reduction " +
                       std::to_string(reduction));
    SqueezeExcite se;
    se.squeeze = LinearLayer<S>::make(channels / reduction, channels, rng);
    se.excite = LinearLayer<S>::make(channels, channels / reduction, rng);
    return se;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    squeeze.visit(prefix + ".squeeze", fn);
    excite.visit(prefix + ".excite", fn);
  }
};

template <typename S>
Tensor<S> squeeze_excitation(const Tensor<S>& features,
                             const SqueezeExcite<S>& se) {
  Tensor<S> pooled = reduce_mean(features, {2, 3});  // T x C
  Tensor<S> gates = sigmoid_open(se.excite(relu(se.squeeze(pooled))));
  return spatial_scale(features, gates);
}

// Small strided CNN with named stages; stands in for the ResNet-style
// extractor. Each stage is conv 3x3 stride 2 pad 1, optional SE, ReLU.
// Frames along the first axis are independent.
template <typename S>
class Backbone {
 public:
  struct Stage {
    Conv2dLayer<S> conv;
    std::optional<SqueezeExcite<S>> se;
  };

  Backbone() = default;

  Backbone(BackboneConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int in_ch = cfg_.in_channels;
    for (int c : cfg_.stage_channels) {
      Stage s;
      s.conv = Conv2dLayer<S>::make(c, in_ch, 3, 2, 1, rng);
      if (cfg_.use_se)
        s.se = SqueezeExcite<S>::make(c, cfg_.se_reduction, rng);
      stages_.push_back(std::move(s));
      in_ch = c;
    }
    head_ = LinearLayer<S>::make(cfg_.descriptor_dim, in_ch, rng);
  }

  const BackboneConfig& config() const { return cfg_; }

  // Stages 1..inject_stage applied to a T x Cin x H x W clip tensor.
  Tensor<S> forward_to_stage(const Tensor<S>& clip) const {
    if (clip.rank() != 4 || clip.dim(1) != cfg_.in_channels)
      throw ShapeError("backbone: expected TxCxHxW input with C=" +
                       std::to_string(cfg_.in_channels) + ", got " +
                       shape_str(clip.shape()));
    Tensor<S> x = clip;
    for (int i = 0; i < cfg_.inject_stage; ++i) x = run_stage(i, x);
    return x;
  }

  // Remaining stages, then global average pooling over space and the
  // descriptor head: T x C x I x J -> T x D.
  Tensor<S> forward_from_stage(const Tensor<S>& attended) const {
    Tensor<S> x = attended;
    for (int i = cfg_.inject_stage; i < cfg_.num_stages(); ++i)
      x = run_stage(i, x);
    Tensor<S> pooled = reduce_mean(x, {2, 3});  // T x C
    return head_(pooled);
  }

  Tensor<S> forward(const Tensor<S>& clip) const {
    return forward_from_stage(forward_to_stage(clip));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::string sp = prefix + ".stage" + std::to_string(i + 1);
      stages_[i].conv.visit(sp + ".conv", fn);
      if (stages_[i].se) stages_[i].se->visit(sp + ".se", fn);
    }
    head_.visit(prefix + ".head", fn);
  }

 private:
  Tensor<S> run_stage(int i, const Tensor<S>& x) const {
    Tensor<S> y = stages_[static_cast<std::size_t>(i)].conv(x);
    if (stages_[static_cast<std::size_t>(i)].se)
      y = squeeze_excitation(y, *stages_[static_cast<std::size_t>(i)].se);
    return relu(y);
  }

  BackboneConfig cfg_;
  std::vector<Stage> stages_;
  LinearLayer<S> head_;
};

}  // namespace frid

#endif  // FRID_BACKBONE_HPP_
