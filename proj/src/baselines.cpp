#include "bmgc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bmgc/error.hpp"
#include "bmgc/eval.hpp"
#include "bmgc/nn.hpp"

namespace bmgc {

std::vector<double> pool(const FeatureSequence& seq, const Tensor2& aux) {
  const size_t t_count = seq.x.rows, d = seq.x.cols;
  require(t_count >= 2, Err::InvalidArgument, "pool needs at least 2 frames");
  require(aux.rows == t_count, Err::InvalidArgument, "aux descriptor rows do not match");

  std::vector<double> out;
  out.reserve(2 * d + aux.cols);
  std::vector<double> mean(d, 0.0);
  for (size_t t = 0; t < t_count; ++t) {
    const double* r = seq.x.row(t);
    for (size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& v : mean) v /= static_cast<double>(t_count);
  out.insert(out.end(), mean.begin(), mean.end());

  for (size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (size_t t = 0; t < t_count; ++t) {
      const double dv = seq.x(t, j) - mean[j];
      acc += dv * dv;
    }
    out.push_back(std::sqrt(acc / static_cast<double>(t_count)));
  }

  for (size_t j = 0; j < aux.cols; ++j) {
    double acc = 0.0;
    for (size_t t = 0; t < t_count; ++t) acc += aux(t, j);
    out.push_back(acc / static_cast<double>(t_count));
  }
  return out;
}

PoolStandardizer fit_pool_standardizer(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), Err::InvalidArgument, "no rows to standardize");
  const size_t d = rows.front().size();
  PoolStandardizer s;
  s.mu.assign(d, 0.0);
  s.sigma.assign(d, 0.0);
  for (const std::vector<double>& r : rows) {
    for (size_t j = 0; j < d; ++j) s.mu[j] += r[j];
  }
  for (double& v : s.mu) v /= static_cast<double>(rows.size());
  for (const std::vector<double>& r : rows) {
    for (size_t j = 0; j < d; ++j) {
      const double dv = r[j] - s.mu[j];
      s.sigma[j] += dv * dv;
    }
  }
  for (double& v : s.sigma) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

std::vector<double> standardize(const std::vector<double>& row, const PoolStandardizer& s) {
  std::vector<double> out(row.size());
  for (size_t j = 0; j < row.size(); ++j) {
    out[j] = (row[j] - s.mu[j]) / std::max(s.sigma[j], 1e-8);
  }
  return out;
}

LogRegModel logreg_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         size_t n_classes, size_t epochs, double lr, double l2) {
  require(!x.empty() && x.size() == y.size(), Err::InvalidArgument, "logreg: bad training set");
  const size_t dim = x.front().size();
  const size_t n = x.size();

  LogRegModel model;
  model.weights = Tensor2(n_classes, dim);
  model.bias.assign(n_classes, 0.0);

  Tensor2 gw(n_classes, dim);
  std::vector<double> gb(n_classes), probs(n_classes);
  for (size_t epoch = 0; epoch < epochs; ++epoch) {
    gw.zero();
    std::fill(gb.begin(), gb.end(), 0.0);
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (size_t c = 0; c < n_classes; ++c) {
        probs[c] = model.bias[c] + dot(model.weights.row(c), x[i].data(), dim);
      }
      softmax_inplace(probs.data(), n_classes);
      loss += -std::log(std::max(probs[static_cast<size_t>(y[i])], kProbFloor));
      for (size_t c = 0; c < n_classes; ++c) {
        const double delta = probs[c] - (static_cast<size_t>(y[i]) == c ? 1.0 : 0.0);
        axpy(delta, x[i].data(), gw.row(c), dim);
        gb[c] += delta;
      }
    }
    loss /= static_cast<double>(n);
    double penalty = 0.0;
    for (double w : model.weights.data) penalty += w * w;
    loss += 0.5 * l2 * penalty;
    model.loss_curve.push_back(loss);

    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t c = 0; c < n_classes; ++c) {
      double* w = model.weights.row(c);
      const double* g = gw.row(c);
      for (size_t j = 0; j < dim; ++j) w[j] -= lr * (g[j] * inv_n + l2 * w[j]);
      model.bias[c] -= lr * gb[c] * inv_n;
    }
  }
  return model;
}

std::vector<double> logreg_probs(const LogRegModel& model, const std::vector<double>& x) {
  std::vector<double> probs(model.bias.size());
  for (size_t c = 0; c < probs.size(); ++c) {
    probs[c] = model.bias[c] + dot(model.weights.row(c), x.data(), x.size());
  }
  softmax_inplace(probs.data(), probs.size());
  return probs;
}

int logreg_predict(const LogRegModel& model, const std::vector<double>& x) {
  return argmax_class(logreg_probs(model, x));
}

int knn_predict(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                const std::vector<double>& query, size_t k) {
  require(k >= 1, Err::InvalidArgument, "knn: k must be >= 1");
  require(!train_x.empty() && train_x.size() == train_y.size(), Err::InvalidArgument,
          "knn: bad training set");
  require(k <= train_x.size(), Err::KTooLarge,
          "k=" + std::to_string(k) + " exceeds training size " + std::to_string(train_x.size()));

  std::vector<std::pair<double, size_t>> dists(train_x.size());
  for (size_t i = 0; i < train_x.size(); ++i) {
    double acc = 0.0;
    const std::vector<double>& r = train_x[i];
    for (size_t j = 0; j < query.size(); ++j) {
      const double d = r[j] - query[j];
      acc += d * d;
    }
    dists[i] = {acc, i};
  }
  std::sort(dists.begin(), dists.end());  // (distance, dataset index) resolves ties

  int max_class = 0;
  for (int y : train_y) max_class = std::max(max_class, y);
  std::vector<size_t> votes(static_cast<size_t>(max_class) + 1, 0);
  for (size_t i = 0; i < k; ++i) ++votes[static_cast<size_t>(train_y[dists[i].second])];

  int best = 0;
  for (size_t c = 1; c < votes.size(); ++c) {
    if (votes[c] > votes[static_cast<size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

std::vector<CompareRow> compare(const SegmentDataset& data, const std::vector<Tensor2>& aux,
                                const SegmentSplit& split, uint64_t shared_split_hash,
                                const CompareConfig& cfg) {
  require(aux.size() == data.segments.size(), Err::InvalidArgument,
          "compare: aux descriptors must accompany every segment");
  for (const Tensor2& a : aux) {
    require(a.rows > 0, Err::InvalidArgument,
            "compare: missing aux descriptors (re-run extraction)");
  }

  // pooled features, standardized with train-split statistics
  std::vector<std::vector<double>> pooled(data.segments.size());
  for (size_t i = 0; i < data.segments.size(); ++i) pooled[i] = pool(data.segments[i], aux[i]);
  std::vector<std::vector<double>> train_rows;
  std::vector<int> train_y;
  for (size_t i : split.train) {
    train_rows.push_back(pooled[i]);
    train_y.push_back(data.labels[i]);
  }
  PoolStandardizer std_stats = fit_pool_standardizer(train_rows);
  for (std::vector<double>& r : train_rows) r = standardize(r, std_stats);

  auto test_accuracy = [&](auto&& predict_fn) {
    size_t correct = 0;
    for (size_t i : split.test) {
      if (predict_fn(i) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(split.test.size());
  };

  std::vector<CompareRow> rows;
  const uint64_t seed = cfg.nn.seed;

  LogRegModel lr = logreg_train(train_rows, train_y, data.label_set.size(), cfg.logreg_epochs,
                                cfg.logreg_lr);
  rows.push_back({"logistic_regression",
                  test_accuracy([&](size_t i) {
                    return logreg_predict(lr, standardize(pooled[i], std_stats));
                  }),
                  shared_split_hash, seed});

  rows.push_back({"knn_" + std::to_string(cfg.knn_k),
                  test_accuracy([&](size_t i) {
                    return knn_predict(train_rows, train_y, standardize(pooled[i], std_stats),
                                       cfg.knn_k);
                  }),
                  shared_split_hash, seed});

  TrainConfig uni = cfg.nn;
  uni.bidirectional = false;
  TrainResult uni_result = train(data, split, uni);
  {
    std::vector<FeatureSequence> test_segments;
    std::vector<int> test_labels;
    for (size_t i : split.test) {
      test_segments.push_back(data.segments[i]);
      test_labels.push_back(data.labels[i]);
    }
    EvalReport rep = evaluate(uni_result.params, uni_result.stats, test_segments, test_labels,
                              cfg.nn.threads);
    rows.push_back({"lstm", rep.accuracy, shared_split_hash, seed});

    TrainConfig bi = cfg.nn;
    bi.bidirectional = true;
    TrainResult bi_result = train(data, split, bi);
    EvalReport bi_rep = evaluate(bi_result.params, bi_result.stats, test_segments, test_labels,
                                 cfg.nn.threads);
    rows.push_back({"bilstm", bi_rep.accuracy, shared_split_hash, seed});
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string out = "model,test_accuracy,split_hash,seed\n";
  char buf[160];
  for (const CompareRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%016llx,%llu\n", r.model.c_str(), r.test_accuracy,
                  static_cast<unsigned long long>(r.split_hash),
                  static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  size_t name_w = 5;
  for (const CompareRow& r : rows) name_w = std::max(name_w, r.model.size());
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s %13s\n", static_cast<int>(name_w), "model",
                "test_accuracy");
  out += buf;
  for (const CompareRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %13.4f\n", static_cast<int>(name_w), r.model.c_str(),
                  r.test_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace bmgc
