#ifndef FRID_DATASET_HPP_
#define FRID_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "frid/image.hpp"
#include "frid/optflow.hpp"
#include "frid/tensor.hpp"

namespace frid {

// One tracklet clip: frame/flow/mask files plus labels. Paths are relative
// to the manifest's directory.
struct ManifestRecord {
  std::string clip_id;
  int identity = 0;
  int camera = 0;
  std::vector<std::string> frame_paths;
  std::vector<std::string> flow_paths;
  std::vector<std::string> mask_paths;  // optional
};

struct Manifest {
  std::uint64_t seed = 0;
  Eigen::Index frame_h = 0, frame_w = 0;
  std::vector<ManifestRecord> records;
  std::filesystem::path root;  // directory holding the manifest file

  int num_identities() const;
};

// Text format: header "FRID-MANIFEST v1 seed=<n> frames=<HxW>", then one
// tab-separated record per line: clip_id, identity, camera, comma-joined
// frame paths, flow paths, mask paths ("-" when absent).
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

struct GenParams {
  std::uint64_t seed = 7;
  int num_identities = 32;
  int clips_per_identity = 4;  // per camera
  int frames_per_clip = 16;
  Eigen::Index height = 64, width = 32;
  double occlusion_prob = 0.25;
  int workers = 0;  // 0 = hardware concurrency
};

// Renders the synthetic benchmark: textured articulated sprites translating
// over camera-specific backgrounds, with per-frame visibility masks and
// exact rigid-displacement flow fields written alongside the frames.
// Deterministic in params.seed, byte for byte.
Manifest generate_dataset(const GenParams& params,
                          const std::filesystem::path& out_dir);

// identities [0, n/2) train, [n/2, n) test; splits are disjoint.
bool is_train_identity(int identity, int num_identities);

// "train", "test", "query" or "gallery" (the last two alias the test split;
// the cross-camera protocol removes self/same-camera matches at evaluation).
std::vector<const ManifestRecord*> split_records(const Manifest& m,
                                                 const std::string& split);

enum class ClipSampling { kRandomContiguous, kEvenlySpaced };

// floor(i*(n-1)/(k-1)) spacing covering the whole tracklet.
std::vector<int> evenly_spaced_indices(int n, int k);

struct LoadedClip {
  std::string clip_id;
  int identity = 0;
  int camera = 0;
  std::vector<ImageRgb> frames;
  std::vector<FlowField> flows;
  std::vector<ImageGray> masks;  // empty unless requested and present
};

// Subsamples seq_len frames from a tracklet (random contiguous window for
// training, evenly spaced for evaluation) and decodes frames plus the
// aligned flow fields. Throws UsageError for too-short tracklets; callers
// skip those with a diagnostic.
LoadedClip load_clip(const Manifest& m, const ManifestRecord& rec,
                     int seq_len, ClipSampling sampling,
                     std::mt19937_64* rng, bool want_masks = false);

// Horizontal flip (p=0.5) and +-2 px random crop shift, identical across a
// clip's frames; the flow u channel flips sign under the horizontal flip.
void augment_clip(LoadedClip& clip, std::mt19937_64& rng);

// Smoothly textured image and an integer-translated partner with ground
// truth flow (dx, dy); used by the flow-quality oracles.
Array2d smooth_noise_image(std::uint64_t seed, Eigen::Index h, Eigen::Index w,
                           Eigen::Index grid = 6);
std::pair<Array2d, Array2d> translated_pair(std::uint64_t seed,
                                            Eigen::Index h, Eigen::Index w,
                                            int dx, int dy);

// Network input encodings. Frames are normalized per channel to zero mean
// and unit range ([0,1] minus 0.5); flows are scaled by 1/cap.
template <typename S>
Tensor<S> frames_to_tensor(const std::vector<ImageRgb>& frames) {
  if (frames.empty()) throw UsageError("frames_to_tensor: empty clip");
  const Eigen::Index t = static_cast<Eigen::Index>(frames.size());
  const Eigen::Index h = frames[0].height(), w = frames[0].width();
  typename Tensor<S>::Storage data(t * 3 * h * w);
  Eigen::Index pos = 0;
  for (const ImageRgb& im : frames) {
    for (const Array2d* ch : {&im.r, &im.g, &im.b})
      for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
          data[pos++] = static_cast<S>((*ch)(y, x) - 0.5);
  }
  return Tensor<S>::from_storage({t, 3, h, w}, std::move(data));
}

template <typename S>
Tensor<S> flows_to_tensor(const std::vector<FlowField>& flows, double cap) {
  if (flows.empty()) throw UsageError("flows_to_tensor: empty clip");
  const Eigen::Index t = static_cast<Eigen::Index>(flows.size());
  const Eigen::Index h = flows[0].height(), w = flows[0].width();
  typename Tensor<S>::Storage data(t * 2 * h * w);
  Eigen::Index pos = 0;
  for (const FlowField& f : flows) {
    for (const Array2d* ch : {&f.u, &f.v})
      for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
          data[pos++] = static_cast<S>((*ch)(y, x) / cap);
  }
  return Tensor<S>::from_storage({t, 2, h, w}, std::move(data));
}

}  // namespace frid

#endif  // FRID_DATASET_HPP_
