#ifndef FRID_MODEL_HPP_
#define FRID_MODEL_HPP_

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "frid/aggregation.hpp"
#include "frid/attention.hpp"
#include "frid/backbone.hpp"
#include "frid/ops.hpp"

namespace frid {

enum class AttentionModeKind { kMutual, kGated, kNone };
enum class AggregationKind { kWeighted, kAverage, kTemporalAttention };

inline AttentionModeKind parse_mode(const std::string& s) {
  if (s == "mutual") return AttentionModeKind::kMutual;
  if (s == "gated") return AttentionModeKind::kGated;
  if (s == "none") return AttentionModeKind::kNone;
  throw UsageError("unknown attention mode '" + s +
                   "' (expected mutual|gated|none)");
}

inline AggregationKind parse_agg(const std::string& s) {
  if (s == "weighted") return AggregationKind::kWeighted;
  if (s == "avg") return AggregationKind::kAverage;
  if (s == "tattn") return AggregationKind::kTemporalAttention;
  throw UsageError("unknown aggregation '" + s +
                   "' (expected weighted|avg|tattn)");
}

inline std::string mode_name(AttentionModeKind m) {
  switch (m) {
    case AttentionModeKind::kMutual: return "mutual";
    case AttentionModeKind::kGated: return "gated";
    case AttentionModeKind::kNone: return "none";
  }
  return "?";
}

inline std::string agg_name(AggregationKind a) {
  switch (a) {
    case AggregationKind::kWeighted: return "weighted";
    case AggregationKind::kAverage: return "avg";
    case AggregationKind::kTemporalAttention: return "tattn";
  }
  return "?";
}

struct ModelConfig {
  BackboneConfig backbone;  // appearance stream; flow stream mirrors it
  AttentionModeKind mode = AttentionModeKind::kMutual;
  AggregationKind agg = AggregationKind::kWeighted;
  int num_identities = 16;
  bool normalize_weights = true;  // Eq.-style raw exp-cosine behind this switch
  ReferenceMode reference_mode = ReferenceMode::kElementwiseMax;
  std::uint64_t seed = 1;
};

// The full ReID model. The flow backbone shares the appearance architecture
// but never the parameters; parameter name spaces are disjoint by prefix.
template <typename S>
class ReidModel {
 public:
  ReidModel() = default;

  explicit ReidModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    std::mt19937_64 rng(derive_seed(cfg_.seed, 0xf1d0));
    cfg_.backbone.validate();
    if (cfg_.num_identities < 1)
      throw UsageError("model: num_identities must be >= 1");
    app_ = Backbone<S>(cfg_.backbone, rng);
    const int d = cfg_.backbone.descriptor_dim;
    if (cfg_.mode == AttentionModeKind::kMutual) {
      BackboneConfig flow_cfg = cfg_.backbone;
      flow_cfg.in_channels = 2;
      flow_ = Backbone<S>(flow_cfg, rng);
      const int inject_ch =
          cfg_.backbone.stage_channels[cfg_.backbone.inject_stage - 1];
      zeta_app_ = ProjectionHead<S>::make(inject_ch, rng);
      zeta_flow_ = ProjectionHead<S>::make(inject_ch, rng);
      embed_flow_ = TinyEmbedding<S>::make(d, rng);
      fuse_ = LinearLayer<S>::make(d, 2 * d, rng);
    } else if (cfg_.mode == AttentionModeKind::kGated) {
      flow_cnn_ = ShallowFlowCnn<S>::make(2, rng);
    }
    embed_app_ = TinyEmbedding<S>::make(d, rng);
    if (cfg_.agg == AggregationKind::kTemporalAttention)
      tattn_ = LinearLayer<S>::make(1, d, rng);
    classifier_ = LinearLayer<S>::make(cfg_.num_identities, d, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int descriptor_dim() const { return cfg_.backbone.descriptor_dim; }

  struct Output {
    Tensor<S> descriptors;  // B x D
    Tensor<S> logits;       // B x num_identities
    Tensor<S> attention;    // (B*T) x 1 x I x J when requested, else empty
    WeightDiagnostics weight_diag;
  };

  // frames: (B*T) x 3 x H x W, flows: (B*T) x 2 x H x W (unused for mode
  // none), seq_len: frames per clip. Clips are contiguous along the first
  // axis.
  Output forward(const Tensor<S>& frames, const Tensor<S>& flows, int seq_len,
                 bool want_attention = false) const {
    if (seq_len < 1 || frames.dim(0) % seq_len != 0)
      throw ShapeError("model: frame count " + std::to_string(frames.dim(0)) +
                       " is not a multiple of seq_len " +
                       std::to_string(seq_len));
    const Eigen::Index batch = frames.dim(0) / seq_len;
    Output out;

    Tensor<S> app_feats, flow_feats;  // (B*T) x D per stream
    switch (cfg_.mode) {
      case AttentionModeKind::kMutual: {
        Tensor<S> phi_l = app_.forward_to_stage(frames);
        Tensor<S> f_l = flow_->forward_to_stage(flows);
        Tensor<S> m = mutual_attention_map(phi_l, f_l, *zeta_app_, *zeta_flow_);
        if (want_attention) out.attention = detach(m);
        auto [psi_app, psi_flow] = apply_mutual_attention(phi_l, f_l, m);
        app_feats = app_.forward_from_stage(psi_app);
        flow_feats = flow_->forward_from_stage(psi_flow);
        break;
      }
      case AttentionModeKind::kGated: {
        Tensor<S> psi_l = app_.forward_to_stage(frames);
        Tensor<S> ff = (*flow_cnn_)(flows, psi_l.dim(2), psi_l.dim(3));
        if (want_attention) {
          Tensor<S> pooled = reduce_mean(ff, {1});
          out.attention = detach(sigmoid_open(reshape(
              pooled, {psi_l.dim(0), 1, psi_l.dim(2), psi_l.dim(3)})));
        }
        app_feats = app_.forward_from_stage(gated_attention(psi_l, ff));
        break;
      }
      case AttentionModeKind::kNone: {
        app_feats = app_.forward(frames);
        break;
      }
    }

    std::vector<Tensor<S>> descriptors;
    descriptors.reserve(static_cast<std::size_t>(batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      Tensor<S> clip_app = slice_rows(app_feats, b * seq_len, seq_len);
      Tensor<S> desc_app =
          aggregate(clip_app, embed_app_, &out.weight_diag);
      if (cfg_.mode == AttentionModeKind::kMutual) {
        Tensor<S> clip_flow = slice_rows(flow_feats, b * seq_len, seq_len);
        Tensor<S> desc_flow =
            aggregate(clip_flow, *embed_flow_, &out.weight_diag);
        descriptors.push_back(fuse_and_project(desc_app, desc_flow, *fuse_));
      } else {
        descriptors.push_back(desc_app);
      }
    }
    out.descriptors = stack_rows(descriptors);
    out.logits = classifier_(out.descriptors);
    return out;
  }

  void visit(const ParamVisitor<S>& fn) {
    app_.visit("app", fn);
    if (flow_) flow_->visit("flow", fn);
    if (zeta_app_) zeta_app_->visit("zeta_app", fn);
    if (zeta_flow_) zeta_flow_->visit("zeta_flow", fn);
    if (flow_cnn_) flow_cnn_->visit("flow_cnn", fn);
    embed_app_.visit("embed_app", fn);
    if (embed_flow_) embed_flow_->visit("embed_flow", fn);
    if (fuse_) fuse_->visit("fuse", fn);
    if (tattn_) tattn_->visit("tattn", fn);
    classifier_.visit("classifier", fn);
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    visit([&](const std::string& name, Tensor<S>& t) {
      out.emplace_back(name, t);
    });
    return out;
  }

  void zero_grad() {
    visit([](const std::string&, Tensor<S>& t) { t.zero_grad(); });
  }

  const Backbone<S>& appearance() const { return app_; }
  const Backbone<S>& flow_stream() const { return *flow_; }

 private:
  Tensor<S> aggregate(const Tensor<S>& clip_feats,
                      const TinyEmbedding<S>& embed,
                      WeightDiagnostics* diag) const {
    switch (cfg_.agg) {
      case AggregationKind::kAverage:
        return average_pool(clip_feats);
      case AggregationKind::kTemporalAttention:
        return temporal_attention_pool(clip_feats, *tattn_);
      case AggregationKind::kWeighted: {
        Tensor<S> ref = reference_feature(clip_feats, cfg_.reference_mode);
        Tensor<S> w = aggregation_weights(clip_feats, ref, embed,
                                          cfg_.normalize_weights, diag);
        return weighted_addition(clip_feats, w, cfg_.normalize_weights);
      }
    }
    throw UsageError("model: unknown aggregation kind");
  }

  ModelConfig cfg_;
  Backbone<S> app_;
  std::optional<Backbone<S>> flow_;
  std::optional<ProjectionHead<S>> zeta_app_, zeta_flow_;
  std::optional<ShallowFlowCnn<S>> flow_cnn_;
  TinyEmbedding<S> embed_app_;
  std::optional<TinyEmbedding<S>> embed_flow_;
  std::optional<LinearLayer<S>> fuse_;
  std::optional<LinearLayer<S>> tattn_;
  LinearLayer<S> classifier_;
};

}  // namespace frid

#endif  // FRID_MODEL_HPP_
