#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bmgc/features.hpp"
#include "bmgc/tensor.hpp"

namespace bmgc {

// LSTM gate weights over the concatenated [h_{t-1}; x_t] vector.
struct LstmCellParams {
  size_t hidden = 0;
  size_t input = 0;
  Tensor2 w_f, w_i, w_o, w_g;              // hidden x (hidden + input)
  std::vector<double> b_f, b_i, b_o, b_g;  // hidden
};

struct BatchNormParams {
  std::vector<double> gamma, beta, running_mean, running_var;
};

// One recurrent block: forward/backward scans plus batch norm over the
// block's output features. bwd is unused when the model is unidirectional.
struct BiLstmLayerParams {
  LstmCellParams fwd, bwd;
  BatchNormParams bn;
};

enum class HeadMode { Sequence, Frame };

struct ModelHyper {
  size_t input_dim = 38;
  size_t hidden = 64;
  size_t layers = 2;
  size_t dense_dim = 64;
  size_t n_classes = 10;
  bool bidirectional = true;
  HeadMode mode = HeadMode::Sequence;

  size_t lstm_out_width() const { return bidirectional ? 2 * hidden : hidden; }
};

struct ModelParams {
  ModelHyper hyper;
  std::vector<BiLstmLayerParams> layers;
  Tensor2 dense_hidden_w;  // dense_dim x lstm_out_width
  std::vector<double> dense_hidden_b;
  Tensor2 dense_out_w;  // n_classes x dense_dim
  std::vector<double> dense_out_b;
  std::vector<std::string> genres;
};

// Gradients reuse the parameter layout; running stats stay zero and unused.
using ModelGrads = ModelParams;

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kProbFloor = 1e-12;

// Glorot-uniform weights, forget bias 1, other biases 0, BN identity.
ModelParams init_model(const ModelHyper& hyper, const std::vector<std::string>& genres,
                       uint64_t seed);
ModelGrads zeros_like(const ModelParams& params);

// ---- primitive ops ----

double sigmoid_scalar(double x);

// One cell update; validates shapes and the finite-input contract.
void lstm_cell_step(const LstmCellParams& p, const std::vector<double>& x,
                    const std::vector<double>& h_prev, const std::vector<double>& c_prev,
                    std::vector<double>& h_out, std::vector<double>& c_out);

// Full bidirectional pass from zero initial states; row t = [fwd_t ; bwd_t].
Tensor2 bilstm_layer(const Tensor2& seq, const LstmCellParams& fwd, const LstmCellParams& bwd);

enum class BnMode { Train, Infer };

// Standalone batch-norm op over rows; Train mode requires >= 2 rows and
// updates the running statistics in place.
Tensor2 batch_norm(const Tensor2& x, BatchNormParams& bn, BnMode mode, double eps = kBnEps,
                   double momentum = kBnMomentum);

void softmax_inplace(double* v, size_t n);

// -log of the floored target probability; `probs` must be a distribution.
double cross_entropy(const std::vector<double>& probs, int target);
// frame-level loss: sum over the per-frame terms.
double cross_entropy_frames(const Tensor2& frame_probs, int target);

// ---- batched forward / backward ----

struct DirTrace {
  Tensor2 f, i, o, g, c, h;  // T x hidden, scan order
};

struct LayerTrace {
  std::vector<DirTrace> fwd, bwd;  // per sequence
  std::vector<Tensor2> out;        // per sequence, post-BN
  std::vector<Tensor2> xhat;       // per sequence, train mode only
  std::vector<double> mean, var, inv_std;
};

struct ForwardTrace {
  HeadMode mode = HeadMode::Sequence;
  bool train = false;
  std::vector<const Tensor2*> inputs;  // borrowed; keep alive through backward
  std::vector<LayerTrace> layers;
  // head caches, per sequence
  std::vector<std::vector<double>> seq_u, seq_a, seq_probs;
  std::vector<Tensor2> frame_a, frame_probs;
};

struct BatchForward {
  std::vector<std::vector<double>> seq_probs;  // Sequence mode
  std::vector<Tensor2> frame_probs;            // Frame mode
  double loss = 0.0;                           // mean per-example loss, when targets given
};

// Forward over same-length sequences. BnMode::Train uses batch statistics
// over all B*T frames (running stats untouched; see commit_running_stats).
BatchForward model_forward_batch(const ModelParams& params,
                                 const std::vector<const Tensor2*>& seqs, BnMode bn_mode,
                                 const std::vector<int>* targets, ForwardTrace* trace,
                                 int threads = 1);

// Exact analytic gradients of the mean per-example loss via BPTT.
ModelGrads model_backward(const ModelParams& params, const ForwardTrace& trace,
                          const std::vector<int>& targets, int threads = 1);

// Fold the trace's batch statistics into the running BN statistics.
void commit_running_stats(ModelParams& params, const ForwardTrace& trace,
                          double momentum = kBnMomentum);

double batch_loss(const ModelParams& params, const std::vector<const Tensor2*>& seqs,
                  const std::vector<int>& targets, BnMode bn_mode, int threads = 1);

// Inference-mode class distribution for one sequence (frame-level models
// average their per-frame distributions).
std::vector<double> predict_distribution(const ModelParams& params, const Tensor2& seq);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // per trainable tensor
  uint64_t step = 0;
};

struct TensorRef {
  std::string name;
  double* data;
  size_t size;
  std::vector<size_t> dims;
  bool trainable;
};

// Deterministic tensor walk; grads produced by zeros_like share the order.
std::vector<TensorRef> param_tensors(ModelParams& params);

AdamState make_adam_state(const ModelParams& params);
void adam_step(ModelParams& params, ModelParams& grads, AdamState& state, const AdamConfig& cfg);

// Global-norm clip; returns the pre-clip norm.
double gradient_clip(ModelParams& grads, double max_norm);

// ---- container I/O (BMGC1) ----

void save_model(const std::string& path, const ModelParams& params, const NormStats& stats,
                const std::map<std::string, std::string>& extra_meta = {});

struct LoadedModel {
  ModelParams params;
  NormStats stats;
  std::map<std::string, std::string> meta;
};

LoadedModel load_model(const std::string& path);

}  // namespace bmgc
