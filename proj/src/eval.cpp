#include "bmgc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bmgc/audio.hpp"
#include "bmgc/error.hpp"
#include "bmgc/parallel.hpp"

namespace bmgc {

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

int argmax_class(const std::vector<double>& probs) {
  int best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[static_cast<size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

EvalReport report_from_confusion(const Tensor2& confusion,
                                 const std::vector<std::string>& genres) {
  require(confusion.rows == confusion.cols && confusion.rows == genres.size(),
          Err::InvalidArgument, "confusion matrix shape mismatch");
  const size_t g = genres.size();
  EvalReport rep;
  rep.genres = genres;
  rep.confusion = confusion;
  rep.precision.assign(g, 0.0);
  rep.recall.assign(g, 0.0);
  rep.f1.assign(g, 0.0);
  rep.support.assign(g, 0);

  double trace = 0.0, total = 0.0;
  for (size_t c = 0; c < g; ++c) {
    double tp = confusion(c, c);
    double row = 0.0, col = 0.0;
    for (size_t j = 0; j < g; ++j) {
      row += confusion(c, j);
      col += confusion(j, c);
    }
    rep.support[c] = static_cast<size_t>(std::llround(row));
    rep.precision[c] = col > 0.0 ? tp / col : 0.0;
    rep.recall[c] = row > 0.0 ? tp / row : 0.0;
    rep.f1[c] = f1_score(rep.precision[c], rep.recall[c]);
    trace += tp;
    total += row;
  }
  rep.total = static_cast<size_t>(std::llround(total));
  rep.accuracy = total > 0.0 ? trace / total : 0.0;
  return rep;
}

EvalReport evaluate(const ModelParams& params, const NormStats& stats,
                    const std::vector<FeatureSequence>& segments, const std::vector<int>& labels,
                    int threads) {
  require(!segments.empty(), Err::InvalidArgument, "evaluate: no segments");
  require(segments.size() == labels.size(), Err::InvalidArgument, "evaluate: label count");
  const size_t g = params.genres.size();

  std::vector<int> preds(segments.size(), 0);
  parallel_chunks(segments.size(), threads, [&](size_t begin, size_t end, size_t) {
    for (size_t i = begin; i < end; ++i) {
      const FeatureSequence norm = apply_normalizer(segments[i], stats);
      preds[i] = argmax_class(predict_distribution(params, norm.x));
    }
  });

  Tensor2 confusion(g, g);
  for (size_t i = 0; i < segments.size(); ++i) {
    require(labels[i] >= 0 && static_cast<size_t>(labels[i]) < g, Err::InvalidArgument,
            "label out of range");
    confusion(static_cast<size_t>(labels[i]), static_cast<size_t>(preds[i])) += 1.0;
  }
  return report_from_confusion(confusion, params.genres);
}

int clip_vote(const std::vector<std::vector<double>>& segment_probs) {
  require(!segment_probs.empty(), Err::InvalidArgument, "clip_vote: no segments");
  const size_t g = segment_probs.front().size();
  std::vector<size_t> votes(g, 0);
  std::vector<double> mean_prob(g, 0.0);
  for (const std::vector<double>& p : segment_probs) {
    require(p.size() == g, Err::InvalidArgument, "clip_vote: ragged distributions");
    ++votes[static_cast<size_t>(argmax_class(p))];
    for (size_t j = 0; j < g; ++j) mean_prob[j] += p[j];
  }
  for (double& v : mean_prob) v /= static_cast<double>(segment_probs.size());

  const size_t top_votes = *std::max_element(votes.begin(), votes.end());
  int best = -1;
  for (size_t j = 0; j < g; ++j) {
    if (votes[j] != top_votes) continue;
    if (best < 0 || mean_prob[j] > mean_prob[static_cast<size_t>(best)]) {
      best = static_cast<int>(j);
    }
  }
  return best;
}

ClipPrediction predict_clip(const ModelParams& params, const NormStats& stats,
                            const AudioClip& clip, const FeatureConfig& cfg) {
  AudioClip canonical = resample(clip, cfg.sample_rate);
  std::vector<AudioClip> segments = segment(canonical, cfg.seg_seconds);
  MelFilterBank bank =
      build_mel_filterbank(cfg.n_mels, cfg.frame_len, cfg.sample_rate, cfg.fmin, cfg.fmax);

  ClipPrediction pred;
  for (const AudioClip& seg : segments) {
    FeatureSequence feats = assemble(seg, cfg, bank);
    feats = apply_normalizer(feats, stats);
    pred.segment_probs.push_back(predict_distribution(params, feats.x));
  }
  pred.label = clip_vote(pred.segment_probs);
  return pred;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_report_table(const EvalReport& rep) {
  size_t name_w = 5;
  for (const std::string& g : rep.genres) name_w = std::max(name_w, g.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s\n", static_cast<int>(name_w), "genre",
                "precision", "recall", "f1", "support");
  out += buf;
  for (size_t c = 0; c < rep.genres.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "%-*s %9.4f %9.4f %9.4f %9zu\n", static_cast<int>(name_w),
                  rep.genres[c].c_str(), rep.precision[c], rep.recall[c], rep.f1[c],
                  rep.support[c]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-*s %9.4f  (%zu segments)\n", static_cast<int>(name_w),
                "accuracy", rep.accuracy, rep.total);
  out += buf;
  return out;
}

std::string confusion_csv(const EvalReport& rep) {
  std::string out = "true\\pred";
  for (const std::string& g : rep.genres) out += "," + g;
  out += "\n";
  for (size_t r = 0; r < rep.genres.size(); ++r) {
    out += rep.genres[r];
    for (size_t c = 0; c < rep.genres.size(); ++c) {
      out += "," + std::to_string(static_cast<long long>(std::llround(rep.confusion(r, c))));
    }
    out += "\n";
  }
  return out;
}

std::string report_csv(const EvalReport& rep) {
  std::string out = "genre,precision,recall,f1,support\n";
  for (size_t c = 0; c < rep.genres.size(); ++c) {
    out += rep.genres[c] + "," + fixed(rep.precision[c], 6) + "," + fixed(rep.recall[c], 6) + "," +
           fixed(rep.f1[c], 6) + "," + std::to_string(rep.support[c]) + "\n";
  }
  out += "accuracy," + fixed(rep.accuracy, 6) + ",,," + std::to_string(rep.total) + "\n";
  return out;
}

}  // namespace bmgc
