#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bmgc/features.hpp"
#include "bmgc/tensor.hpp"
#include "bmgc/train.hpp"

namespace bmgc {

// Fixed-length summary for the non-sequential models: per-column mean and
// population standard deviation of the feature sequence, then the means of
// the five auxiliary descriptors (length 2d+5).
std::vector<double> pool(const FeatureSequence& seq, const Tensor2& aux);

struct PoolStandardizer {
  std::vector<double> mu, sigma;
};
PoolStandardizer fit_pool_standardizer(const std::vector<std::vector<double>>& rows);
std::vector<double> standardize(const std::vector<double>& row, const PoolStandardizer& s);

// Multinomial softmax regression, full-batch gradient descent, L2 penalty on
// the weights (biases excluded).
struct LogRegModel {
  Tensor2 weights;               // classes x dim
  std::vector<double> bias;      // classes
  std::vector<double> loss_curve;
};
LogRegModel logreg_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         size_t n_classes, size_t epochs, double lr, double l2 = 1e-4);
std::vector<double> logreg_probs(const LogRegModel& model, const std::vector<double>& x);
int logreg_predict(const LogRegModel& model, const std::vector<double>& x);

// Euclidean k-NN; distance ties broken by dataset order, vote ties by lowest
// class index.
int knn_predict(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                const std::vector<double>& query, size_t k);

struct CompareRow {
  std::string model;
  double test_accuracy = 0.0;
  uint64_t split_hash = 0;
  uint64_t seed = 0;
};

struct CompareConfig {
  TrainConfig nn;         // shared by the two recurrent models
  size_t knn_k = 10;
  size_t logreg_epochs = 300;
  double logreg_lr = 0.1;
};

// Trains and evaluates logistic regression, k-NN, the unidirectional LSTM,
// and the Bi-LSTM on one shared split.
std::vector<CompareRow> compare(const SegmentDataset& data, const std::vector<Tensor2>& aux,
                                const SegmentSplit& split, uint64_t shared_split_hash,
                                const CompareConfig& cfg);

std::string compare_csv(const std::vector<CompareRow>& rows);
std::string compare_table(const std::vector<CompareRow>& rows);

}  // namespace bmgc
