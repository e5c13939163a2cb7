#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bmgc/dataset.hpp"
#include "bmgc/features.hpp"
#include "bmgc/nn.hpp"

namespace bmgc {

struct TrainConfig {
  size_t hidden = 64;
  size_t layers = 2;
  size_t dense_dim = 64;
  bool bidirectional = true;
  HeadMode mode = HeadMode::Sequence;
  size_t batch = 32;
  size_t max_epochs = 100;
  size_t patience = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  uint64_t seed = 42;
  int threads = 1;
  bool deterministic = false;  // forces one thread and zeroed wall clocks
};

struct EpochRecord {
  size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double wall_seconds = 0.0;
};

// Feature segments with labels; `sources` carries the originating recording
// path used for leakage-free splitting.
struct SegmentDataset {
  std::vector<FeatureSequence> segments;
  std::vector<int> labels;
  std::vector<std::string> sources;
  std::vector<std::string> label_set;
};

struct SegmentSplit {
  std::vector<size_t> train, val, test;
};

// Loads every `*.bmfx` under dir (aux files skipped), sorted by path, and the
// recording-level manifest implied by the segment sources.
struct LoadedFeatures {
  SegmentDataset data;
  DatasetManifest recordings;
  std::vector<Tensor2> aux;  // parallel to segments; empty matrices when absent
};
LoadedFeatures load_features_dir(const std::string& dir,
                                 const std::vector<std::string>& label_set = default_genres());

// Maps a recording-level split onto segment indices.
SegmentSplit segment_split(const SegmentDataset& data, const DatasetManifest& recordings,
                           const SplitAssignment& split);

struct TrainResult {
  ModelParams params;  // best-validation-loss weights
  NormStats stats;
  std::vector<EpochRecord> history;
  size_t best_epoch = 0;
};

// Mini-batch Adam with seeded per-epoch shuffling, validation each epoch,
// early stopping on val loss, and best-weight restoration. on_epoch (when
// set) sees the history after every epoch so partial progress can be flushed.
TrainResult train(const SegmentDataset& data, const SegmentSplit& split, const TrainConfig& cfg,
                  const std::function<void(const std::vector<EpochRecord>&)>& on_epoch = {});

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace bmgc
