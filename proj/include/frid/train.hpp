#ifndef FRID_TRAIN_HPP_
#define FRID_TRAIN_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "frid/dataset.hpp"
#include "frid/loss.hpp"
#include "frid/model.hpp"
#include "frid/optim.hpp"

namespace frid {

struct TrainConfig {
  int seq_len = 4;
  int batch_p = 8;  // identities per batch
  int batch_k = 4;  // clips per identity
  AdamConfig adam;
  double margin = 0.3;
  double lambda_id = 1.0;
  double lambda_tri = 1.0;
  int epochs = 30;
  std::uint64_t seed = 1;
  bool augment = true;
  double flow_cap = 16.0;

  void validate() const {
    if (seq_len < 1) throw UsageError("train: seq_len must be >= 1");
    if (batch_p < 2)
      throw UsageError("train: batches need P >= 2 identities for triplets");
    if (batch_k < 2)
      throw UsageError("train: batches need K >= 2 clips per identity");
    if (epochs < 1) throw UsageError("train: epochs must be >= 1");
    if (margin < 0) throw UsageError("train: margin must be >= 0");
  }
};

struct EpochStats {
  int epoch = 0;
  double id_loss = 0.0;
  double triplet_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// Training log row; losses carry full precision so identical runs produce
// identical text.
inline std::string epoch_csv_row(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.3f\n", s.epoch,
                s.id_loss, s.triplet_loss, s.lr, s.seconds);
  return buf;
}

inline constexpr const char* kTrainLogHeader =
    "epoch,id_loss,triplet_loss,lr,seconds\n";

// PK-sampled training over the manifest's train split. Deterministic given
// cfg.seed: one RNG drives sampling, windows and augmentation in a fixed
// order. Aborts with NumericError (with diagnostics) if a loss goes
// non-finite.
template <typename S>
std::vector<EpochStats> train_model(ReidModel<S>& model, Adam<S>& optimizer,
                                    const Manifest& manifest,
                                    const TrainConfig& cfg,
                                    std::ostream* log = nullptr,
                                    std::ostream* progress = nullptr) {
  cfg.validate();
  const auto clips = split_records(manifest, "train");
  if (clips.empty()) throw UsageError("train: manifest has no train clips");

  // contiguous label space over train identities
  std::vector<int> identities;
  for (const ManifestRecord* r : clips) identities.push_back(r->identity);
  std::sort(identities.begin(), identities.end());
  identities.erase(std::unique(identities.begin(), identities.end()),
                   identities.end());
  auto label_of = [&](int identity) {
    return static_cast<int>(
        std::lower_bound(identities.begin(), identities.end(), identity) -
        identities.begin());
  };
  if (static_cast<int>(identities.size()) < cfg.batch_p)
    throw UsageError("train: batch needs P=" + std::to_string(cfg.batch_p) +
                     " distinct identities but the train split has " +
                     std::to_string(identities.size()));
  if (static_cast<int>(identities.size()) !=
      model.config().num_identities)
    throw UsageError("train: model classifier expects " +
                     std::to_string(model.config().num_identities) +
                     " identities, train split has " +
                     std::to_string(identities.size()));

  std::vector<std::vector<const ManifestRecord*>> clips_of_label(
      identities.size());
  for (const ManifestRecord* r : clips)
    clips_of_label[static_cast<std::size_t>(label_of(r->identity))]
        .push_back(r);
  for (std::size_t l = 0; l < clips_of_label.size(); ++l)
    if (static_cast<int>(clips_of_label[l].size()) < cfg.batch_k)
      throw UsageError("train: identity " + std::to_string(identities[l]) +
                       " has fewer than K=" + std::to_string(cfg.batch_k) +
                       " clips");

  const int steps_per_epoch = std::max<int>(
      1, static_cast<int>(clips.size()) / (cfg.batch_p * cfg.batch_k));
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x7a11));

  if (log) *log << kTrainLogHeader;
  std::vector<EpochStats> history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double id_sum = 0.0, tri_sum = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      // choose P identities, then K clips per identity, without replacement
      std::vector<int> label_pool(identities.size());
      for (std::size_t i = 0; i < label_pool.size(); ++i)
        label_pool[i] = static_cast<int>(i);
      std::shuffle(label_pool.begin(), label_pool.end(), rng);
      label_pool.resize(static_cast<std::size_t>(cfg.batch_p));

      std::vector<LoadedClip> batch;
      std::vector<int> labels;
      for (int lbl : label_pool) {
        auto pool = clips_of_label[static_cast<std::size_t>(lbl)];
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int k = 0; k < cfg.batch_k; ++k) {
          LoadedClip clip =
              load_clip(manifest, *pool[static_cast<std::size_t>(k)],
                        cfg.seq_len, ClipSampling::kRandomContiguous, &rng);
          if (cfg.augment) augment_clip(clip, rng);
          batch.push_back(std::move(clip));
          labels.push_back(lbl);
        }
      }

      // assemble batch tensors: clips contiguous along the first axis
      std::vector<ImageRgb> all_frames;
      std::vector<FlowField> all_flows;
      for (const LoadedClip& clip : batch) {
        all_frames.insert(all_frames.end(), clip.frames.begin(),
                          clip.frames.end());
        all_flows.insert(all_flows.end(), clip.flows.begin(),
                         clip.flows.end());
      }
      Tensor<S> frames = frames_to_tensor<S>(all_frames);
      Tensor<S> flows = flows_to_tensor<S>(all_flows, cfg.flow_cap);

      auto out = model.forward(frames, flows, cfg.seq_len);
      Tensor<S> lid = id_loss(out.logits, labels);
      Tensor<S> ltri =
          triplet_loss(out.descriptors, labels, static_cast<S>(cfg.margin));
      Tensor<S> total =
          add(mul_scalar(lid, static_cast<S>(cfg.lambda_id)),
              mul_scalar(ltri, static_cast<S>(cfg.lambda_tri)));

      const double lid_v = static_cast<double>(lid.values()[0]);
      const double ltri_v = static_cast<double>(ltri.values()[0]);
      if (!std::isfinite(lid_v) || !std::isfinite(ltri_v))
        throw NumericError(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            " step " + std::to_string(step) + " (id_loss=" +
            std::to_string(lid_v) + ", triplet_loss=" + std::to_string(ltri_v) +
            ")");
      id_sum += lid_v;
      tri_sum += ltri_v;

      model.zero_grad();
      backward(total);
      auto params = model.named_parameters();
      optimizer.step(params);
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochStats stats;
    stats.epoch = epoch;
    stats.id_loss = id_sum / steps_per_epoch;
    stats.triplet_loss = tri_sum / steps_per_epoch;
    stats.lr = optimizer.config().lr;
    stats.seconds =
        std::chrono::duration<double>(t1 - t0).count();
    history.push_back(stats);
    if (log) {
      *log << epoch_csv_row(stats);
      log->flush();
    }
    if (progress)
      *progress << "epoch " << epoch << "/" << cfg.epochs
                << "  id_loss " << stats.id_loss << "  triplet_loss "
                << stats.triplet_loss << "\n";
  }
  return history;
}

}  // namespace frid

#endif  // FRID_TRAIN_HPP_
