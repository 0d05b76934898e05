#ifndef FRID_PIPELINE_HPP_
#define FRID_PIPELINE_HPP_

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "frid/checkpoint.hpp"
#include "frid/dataset.hpp"
#include "frid/evaluation.hpp"
#include "frid/model.hpp"
#include "frid/runconfig.hpp"
#include "frid/train.hpp"

// Glue shared by the CLI and the acceptance suite: config -> typed configs,
// descriptor extraction, attention export.
namespace frid {

inline GenParams gen_params_from(const RunConfig& cfg) {
  GenParams p;
  p.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  p.num_identities = static_cast<int>(cfg.get_int("ids"));
  p.clips_per_identity = static_cast<int>(cfg.get_int("clips_per_id"));
  p.frames_per_clip = static_cast<int>(cfg.get_int("frames_per_clip"));
  p.height = cfg.get_int("height");
  p.width = cfg.get_int("width");
  p.occlusion_prob = cfg.get_double("occlusion_prob");
  p.workers = static_cast<int>(cfg.get_int("workers"));
  return p;
}

inline FlowParams flow_params_from(const RunConfig& cfg) {
  FlowParams p;
  p.alpha = cfg.get_double("flow_alpha");
  p.iterations = static_cast<int>(cfg.get_int("flow_iters"));
  p.cap = cfg.get_double("flow_cap");
  if (p.alpha <= 0) throw UsageError("flow_alpha must be > 0");
  if (p.iterations < 1) throw UsageError("flow_iters must be >= 1");
  if (p.cap <= 0) throw UsageError("flow_cap must be > 0");
  return p;
}

inline BackboneConfig backbone_config_from(const RunConfig& cfg) {
  BackboneConfig b;
  b.in_channels = 3;
  b.stage_channels = cfg.get_int_list("stage_channels");
  b.inject_stage = static_cast<int>(cfg.get_int("inject_stage"));
  b.descriptor_dim = static_cast<int>(cfg.get_int("descriptor_dim"));
  b.use_se = cfg.get_bool("use_se");
  b.se_reduction = static_cast<int>(cfg.get_int("se_reduction"));
  b.validate();
  return b;
}

inline ModelConfig model_config_from(const RunConfig& cfg,
                                     int num_train_identities) {
  ModelConfig m;
  m.backbone = backbone_config_from(cfg);
  m.mode = parse_mode(cfg.get("mode"));
  m.agg = parse_agg(cfg.get("agg"));
  m.num_identities = num_train_identities;
  m.normalize_weights = cfg.get_bool("normalize_weights");
  const std::string ref = cfg.get("reference_mode");
  if (ref == "max")
    m.reference_mode = ReferenceMode::kElementwiseMax;
  else if (ref == "argmax_frame")
    m.reference_mode = ReferenceMode::kArgmaxFrame;
  else
    throw UsageError("reference_mode must be max or argmax_frame, got '" +
                     ref + "'");
  m.seed = static_cast<std::uint64_t>(cfg.get_int("train_seed"));
  return m;
}

inline TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.seq_len = static_cast<int>(cfg.get_int("seq_len"));
  t.batch_p = static_cast<int>(cfg.get_int("batch_p"));
  t.batch_k = static_cast<int>(cfg.get_int("batch_k"));
  t.adam.lr = cfg.get_double("lr");
  t.adam.beta1 = cfg.get_double("beta1");
  t.adam.beta2 = cfg.get_double("beta2");
  t.adam.eps = cfg.get_double("adam_eps");
  t.margin = cfg.get_double("margin");
  t.lambda_id = cfg.get_double("lambda_id");
  t.lambda_tri = cfg.get_double("lambda_tri");
  t.epochs = static_cast<int>(cfg.get_int("epochs"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train_seed"));
  t.augment = cfg.get_bool("augment");
  t.flow_cap = cfg.get_double("flow_cap");
  t.validate();
  return t;
}

inline EvalProtocol eval_protocol_from(const RunConfig& cfg) {
  EvalProtocol p;
  p.ranks = cfg.get_int_list("ranks");
  const std::string d = cfg.get("distance");
  if (d == "euclidean")
    p.cosine = false;
  else if (d == "cosine")
    p.cosine = true;
  else
    throw UsageError("distance must be euclidean or cosine, got '" + d + "'");
  return p;
}

inline int train_identity_count(const Manifest& m) {
  const auto recs = split_records(m, "train");
  std::vector<int> ids;
  for (const ManifestRecord* r : recs) ids.push_back(r->identity);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return static_cast<int>(ids.size());
}

// Replaces every clip's flow files with Horn-Schunck estimates computed from
// its frames, writing .flo files under flow_est/ and updating the manifest
// records in place. Parallel over clips; output is independent of the worker
// count.
inline void estimate_flows_for_manifest(Manifest& m, const FlowParams& params,
                                        int workers) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(m.root / "flow_est", ec);
  if (ec)
    throw IoError("cannot create flow_est under " + m.root.string() + ": " +
                  ec.message());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::vector<std::string> errors;
  auto worker = [&] {
    try {
      for (std::size_t i = next.fetch_add(1); i < m.records.size();
           i = next.fetch_add(1)) {
        ManifestRecord& rec = m.records[i];
        std::vector<Array2d> gray;
        for (const std::string& fp : rec.frame_paths)
          gray.push_back(luma(read_ppm(m.root / fp)).v);
        const auto fields = clip_flow(gray, params);
        for (std::size_t t = 0; t < fields.size(); ++t) {
          char suffix[32];
          std::snprintf(suffix, sizeof suffix, "_t%02zu.flo", t);
          const std::string rel = "flow_est/" + rec.clip_id + suffix;
          write_flo(m.root / rel, fields[t]);
          rec.flow_paths[t] = rel;
        }
      }
    } catch (const std::exception& e) {
      std::scoped_lock lock(err_mu);
      errors.emplace_back(e.what());
    }
  };
  const int n = std::max(
      1, std::min<int>(workers, static_cast<int>(m.records.size())));
  std::vector<std::thread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!errors.empty())
    throw IoError("flow estimation failed: " + errors.front());
}

// Per-clip attention maps handed to the exporter: values of the (B*T)x1xIxJ
// tensor for one clip, one grayscale image per frame.
using AttentionSink = std::function<void(
    const std::string& clip_id, const std::vector<ImageGray>& maps)>;

// Evenly-spaced descriptor extraction over a manifest split. Too-short
// tracklets are skipped with a diagnostic on the given stream.
template <typename S>
std::vector<DescriptorRecord> extract_descriptors(
    const ReidModel<S>& model, const Manifest& manifest,
    const std::vector<const ManifestRecord*>& records, int seq_len,
    double flow_cap, std::ostream* diagnostics = nullptr,
    const AttentionSink& attention_sink = nullptr) {
  NoGradGuard no_grad;
  std::vector<DescriptorRecord> out;
  for (const ManifestRecord* rec : records) {
    LoadedClip clip;
    try {
      clip = load_clip(manifest, *rec, seq_len, ClipSampling::kEvenlySpaced,
                       nullptr);
    } catch (const UsageError& e) {
      if (diagnostics)
        *diagnostics << "skipping clip " << rec->clip_id << ": " << e.what()
                     << "\n";
      continue;
    }
    Tensor<S> frames = frames_to_tensor<S>(clip.frames);
    Tensor<S> flows = flows_to_tensor<S>(clip.flows, flow_cap);
    const bool want_attention = static_cast<bool>(attention_sink);
    auto fw = model.forward(frames, flows, seq_len, want_attention);

    DescriptorRecord d;
    d.clip_id = rec->clip_id;
    d.identity = static_cast<std::uint32_t>(rec->identity);
    d.camera = static_cast<std::uint32_t>(rec->camera);
    d.values.resize(fw.descriptors.dim(1));
    for (Eigen::Index i = 0; i < d.values.size(); ++i)
      d.values[i] = static_cast<double>(fw.descriptors.values()[i]);
    out.push_back(std::move(d));

    if (want_attention && fw.attention.defined()) {
      const Eigen::Index t = fw.attention.dim(0), ih = fw.attention.dim(2),
                         iw = fw.attention.dim(3);
      std::vector<ImageGray> maps;
      for (Eigen::Index f = 0; f < t; ++f) {
        ImageGray im{Array2d(ih, iw)};
        for (Eigen::Index y = 0; y < ih; ++y)
          for (Eigen::Index x = 0; x < iw; ++x)
            im.v(y, x) =
                static_cast<double>(fw.attention.at({f, 0, y, x}));
        maps.push_back(std::move(im));
      }
      attention_sink(rec->clip_id, maps);
    }
  }
  return out;
}

}  // namespace frid

#endif  // FRID_PIPELINE_HPP_
