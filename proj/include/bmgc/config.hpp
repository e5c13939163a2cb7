#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "bmgc/features.hpp"
#include "bmgc/train.hpp"

namespace bmgc {

// Every tunable of the pipeline, serialized verbatim into each output
// directory as config.resolved.
struct RunConfig {
  // audio / features
  double sample_rate = 22050.0;
  double seg_seconds = 5.0;
  size_t frame_len = 2048;
  size_t hop = 512;
  size_t n_mels = 40;
  size_t n_mfcc = 13;
  size_t delta_width = 4;
  double fmin = 0.0;
  double fmax = 11025.0;
  // model
  size_t hidden = 64;
  size_t layers = 2;
  size_t dense_dim = 64;
  bool bidirectional = true;
  std::string mode = "sequence";  // sequence | frame
  // training
  size_t batch = 32;
  size_t max_epochs = 100;
  size_t patience = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;
  std::array<double, 3> fractions{0.70, 0.15, 0.15};
  // baselines
  size_t knn_k = 10;
  size_t logreg_epochs = 300;
  double logreg_lr = 0.1;
  // run control
  uint64_t seed = 42;
  int threads = 0;  // 0 = hardware concurrency
  bool deterministic = false;
  size_t per_class = 10;  // synth

  FeatureConfig feature_config() const;
  TrainConfig train_config() const;

  void set(const std::string& key, const std::string& value);
  std::string serialize() const;
};

// key=value lines; '#' starts a comment line.
RunConfig parse_config_file(const std::string& path, RunConfig base = {});

}  // namespace bmgc
