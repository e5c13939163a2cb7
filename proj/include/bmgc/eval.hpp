#pragma once

#include <string>
#include <vector>

#include "bmgc/features.hpp"
#include "bmgc/nn.hpp"
#include "bmgc/tensor.hpp"

namespace bmgc {

struct EvalReport {
  std::vector<std::string> genres;
  Tensor2 confusion;  // rows = true, cols = predicted, counts
  std::vector<double> precision, recall, f1;
  std::vector<size_t> support;
  double accuracy = 0.0;
  size_t total = 0;
};

// 2PR/(P+R), 0 when both are 0.
double f1_score(double precision, double recall);

// argmax with ties broken toward the lowest index
int argmax_class(const std::vector<double>& probs);

EvalReport report_from_confusion(const Tensor2& confusion,
                                 const std::vector<std::string>& genres);

// Inference-mode evaluation of normalized feature sequences.
EvalReport evaluate(const ModelParams& params, const NormStats& stats,
                    const std::vector<FeatureSequence>& segments, const std::vector<int>& labels,
                    int threads = 1);

// Majority vote over segment argmaxes; ties by highest mean probability,
// then lowest class index.
int clip_vote(const std::vector<std::vector<double>>& segment_probs);

struct ClipPrediction {
  std::vector<std::vector<double>> segment_probs;
  int label = 0;
};

// Full pipeline on a raw clip: resample, segment, extract, normalize, score.
ClipPrediction predict_clip(const ModelParams& params, const NormStats& stats,
                            const AudioClip& clip, const FeatureConfig& cfg);

std::string format_report_table(const EvalReport& report);
std::string confusion_csv(const EvalReport& report);
std::string report_csv(const EvalReport& report);

}  // namespace bmgc
