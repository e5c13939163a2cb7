#include "bmgc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>

#include "bmgc/error.hpp"
#include "bmgc/eval.hpp"
#include "bmgc/rng.hpp"

namespace fs = std::filesystem;

namespace bmgc {

LoadedFeatures load_features_dir(const std::string& dir,
                                 const std::vector<std::string>& label_set) {
  require(fs::is_directory(dir), Err::IoError, dir + " is not a directory");

  std::vector<std::string> paths;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string p = e.path().string();
    if (p.size() >= 5 && p.substr(p.size() - 5) == ".bmfx" &&
        (p.size() < 9 || p.substr(p.size() - 9) != ".aux.bmfx")) {
      paths.push_back(p);
    }
  }
  std::sort(paths.begin(), paths.end());
  require(!paths.empty(), Err::EmptyManifest, "no feature files under " + dir);

  LoadedFeatures out;
  out.data.label_set = label_set;
  out.recordings.label_set = label_set;
  std::map<std::string, std::string> source_genre;

  for (const std::string& p : paths) {
    FeatureSequence seq = read_feature_file(p);
    const int label = [&] {
      for (size_t i = 0; i < label_set.size(); ++i) {
        if (label_set[i] == seq.label) return static_cast<int>(i);
      }
      fail(Err::UnknownGenre, p + ": label '" + seq.label + "'");
    }();
    const std::string aux_path = p.substr(0, p.size() - 5) + ".aux.bmfx";
    out.aux.push_back(fs::exists(aux_path) ? read_aux_file(aux_path) : Tensor2{});

    auto [it, inserted] = source_genre.emplace(seq.source, seq.label);
    if (!inserted) {
      require(it->second == seq.label, Err::ParseError,
              p + ": source '" + seq.source + "' appears with two labels");
    } else {
      out.recordings.entries.push_back({seq.source, seq.label});
    }
    out.data.sources.push_back(seq.source);
    out.data.labels.push_back(label);
    out.data.segments.push_back(std::move(seq));
  }
  return out;
}

SegmentSplit segment_split(const SegmentDataset& data, const DatasetManifest& recordings,
                           const SplitAssignment& split) {
  std::map<std::string, SplitPart> part;
  for (size_t i : split.train) part[recordings.entries[i].path] = SplitPart::Train;
  for (size_t i : split.val) part[recordings.entries[i].path] = SplitPart::Val;
  for (size_t i : split.test) part[recordings.entries[i].path] = SplitPart::Test;

  SegmentSplit out;
  for (size_t s = 0; s < data.segments.size(); ++s) {
    auto it = part.find(data.sources[s]);
    require(it != part.end(), Err::ParseError,
            "segment source '" + data.sources[s] + "' missing from the split");
    switch (it->second) {
      case SplitPart::Train: out.train.push_back(s); break;
      case SplitPart::Val: out.val.push_back(s); break;
      case SplitPart::Test: out.test.push_back(s); break;
    }
  }
  return out;
}

namespace {

int aggregate_prediction(const ModelParams& params, const BatchForward& fwd, size_t b) {
  if (params.hyper.mode == HeadMode::Sequence) return argmax_class(fwd.seq_probs[b]);
  const Tensor2& fp = fwd.frame_probs[b];
  std::vector<double> mean(fp.cols, 0.0);
  for (size_t t = 0; t < fp.rows; ++t) {
    for (size_t j = 0; j < fp.cols; ++j) mean[j] += fp(t, j);
  }
  return argmax_class(mean);
}

struct EvalPass {
  double loss = 0.0;
  double acc = 0.0;
};

EvalPass infer_pass(const ModelParams& params, const std::vector<Tensor2>& normalized,
                    const std::vector<int>& labels, const std::vector<size_t>& idx, size_t batch,
                    int threads) {
  EvalPass out;
  size_t correct = 0;
  double loss_sum = 0.0;
  for (size_t at = 0; at < idx.size(); at += batch) {
    const size_t n = std::min(batch, idx.size() - at);
    std::vector<const Tensor2*> seqs(n);
    std::vector<int> targets(n);
    for (size_t k = 0; k < n; ++k) {
      seqs[k] = &normalized[idx[at + k]];
      targets[k] = labels[idx[at + k]];
    }
    BatchForward fwd = model_forward_batch(params, seqs, BnMode::Infer, &targets, nullptr, threads);
    loss_sum += fwd.loss * static_cast<double>(n);
    for (size_t k = 0; k < n; ++k) {
      if (aggregate_prediction(params, fwd, k) == targets[k]) ++correct;
    }
  }
  out.loss = loss_sum / static_cast<double>(idx.size());
  out.acc = static_cast<double>(correct) / static_cast<double>(idx.size());
  return out;
}

}  // namespace

TrainResult train(const SegmentDataset& data, const SegmentSplit& split, const TrainConfig& cfg,
                  const std::function<void(const std::vector<EpochRecord>&)>& on_epoch) {
  require(!split.train.empty(), Err::InvalidArgument, "empty training split");
  require(!split.val.empty(), Err::InvalidArgument, "empty validation split");
  require(!data.segments.empty(), Err::InvalidArgument, "empty dataset");
  const int threads = cfg.deterministic ? 1 : std::max(1, cfg.threads);

  // normalizer fitted on the training split only
  std::vector<FeatureSequence> train_seqs;
  for (size_t i : split.train) train_seqs.push_back(data.segments[i]);
  NormStats stats = fit_normalizer(train_seqs);
  train_seqs.clear();

  std::vector<Tensor2> normalized(data.segments.size());
  for (size_t i = 0; i < data.segments.size(); ++i) {
    normalized[i] = apply_normalizer(data.segments[i], stats).x;
  }

  ModelHyper hyper;
  hyper.input_dim = data.segments.front().x.cols;
  hyper.hidden = cfg.hidden;
  hyper.layers = cfg.layers;
  hyper.dense_dim = cfg.dense_dim;
  hyper.n_classes = data.label_set.size();
  hyper.bidirectional = cfg.bidirectional;
  hyper.mode = cfg.mode;

  ModelParams params = init_model(hyper, data.label_set, mix_seed(cfg.seed, 0));
  AdamState adam = make_adam_state(params);
  const AdamConfig adam_cfg{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};

  TrainResult result;
  result.stats = stats;
  ModelParams best = params;
  double best_val_loss = std::numeric_limits<double>::infinity();
  size_t best_epoch = 0;
  size_t since_best = 0;

  std::vector<size_t> order = split.train;
  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch) {
      const size_t n = std::min(cfg.batch, order.size() - at);
      std::vector<const Tensor2*> seqs(n);
      std::vector<int> targets(n);
      for (size_t k = 0; k < n; ++k) {
        seqs[k] = &normalized[order[at + k]];
        targets[k] = data.labels[order[at + k]];
      }
      ForwardTrace trace;
      BatchForward fwd = model_forward_batch(params, seqs, BnMode::Train, &targets, &trace, threads);
      loss_sum += fwd.loss * static_cast<double>(n);
      for (size_t k = 0; k < n; ++k) {
        if (aggregate_prediction(params, fwd, k) == targets[k]) ++correct;
      }
      ModelGrads grads = model_backward(params, trace, targets, threads);
      gradient_clip(grads, cfg.grad_clip);
      commit_running_stats(params, trace);
      adam_step(params, grads, adam, adam_cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    EvalPass val = infer_pass(params, normalized, data.labels, split.val, cfg.batch, threads);
    rec.val_loss = val.loss;
    rec.val_acc = val.acc;
    const auto t1 = std::chrono::steady_clock::now();
    rec.wall_seconds =
        cfg.deterministic ? 0.0 : std::chrono::duration<double>(t1 - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(result.history);

    if (rec.val_loss < best_val_loss) {
      best_val_loss = rec.val_loss;
      best = params;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) break;
    }
  }

  result.params = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n";
  char buf[256];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.3f\n", r.epoch, r.train_loss,
                  r.train_acc, r.val_loss, r.val_acc, r.wall_seconds);
    out += buf;
  }
  return out;
}

}  // namespace bmgc
