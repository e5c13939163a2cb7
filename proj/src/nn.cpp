#include "bmgc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/parallel.hpp"
#include "bmgc/rng.hpp"

namespace bmgc {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace {

// row accessor that optionally presents the sequence time-reversed, so the
// backward direction is literally a forward scan over the reversed input
struct RowView {
  const Tensor2* m;
  bool reversed;
  const double* operator[](size_t t) const { return m->row(reversed ? m->rows - 1 - t : t); }
};

void init_cell(LstmCellParams& p, size_t hidden, size_t input, Rng& rng) {
  p.hidden = hidden;
  p.input = input;
  const size_t v = hidden + input;
  const double limit = std::sqrt(6.0 / static_cast<double>(hidden + v));
  for (Tensor2* w : {&p.w_f, &p.w_i, &p.w_o, &p.w_g}) {
    *w = Tensor2(hidden, v);
    for (double& x : w->data) x = rng.uniform(-limit, limit);
  }
  p.b_f.assign(hidden, 1.0);  // open the forget gate at init
  p.b_i.assign(hidden, 0.0);
  p.b_o.assign(hidden, 0.0);
  p.b_g.assign(hidden, 0.0);
}

void init_dense(Tensor2& w, std::vector<double>& b, size_t out_dim, size_t in_dim, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(out_dim + in_dim));
  w = Tensor2(out_dim, in_dim);
  for (double& x : w.data) x = rng.uniform(-limit, limit);
  b.assign(out_dim, 0.0);
}

size_t layer_input_dim(const ModelHyper& h, size_t layer) {
  return layer == 0 ? h.input_dim : h.lstm_out_width();
}

void scan_forward(const LstmCellParams& p, const RowView& input, size_t t_count, DirTrace& tr) {
  const size_t hidden = p.hidden, v_len = p.hidden + p.input;
  tr.f = Tensor2(t_count, hidden);
  tr.i = Tensor2(t_count, hidden);
  tr.o = Tensor2(t_count, hidden);
  tr.g = Tensor2(t_count, hidden);
  tr.c = Tensor2(t_count, hidden);
  tr.h = Tensor2(t_count, hidden);

  std::vector<double> v(v_len, 0.0);
  const std::vector<double> zero(hidden, 0.0);
  for (size_t t = 0; t < t_count; ++t) {
    const double* h_prev = t > 0 ? tr.h.row(t - 1) : zero.data();
    const double* c_prev = t > 0 ? tr.c.row(t - 1) : zero.data();
    std::memcpy(v.data(), h_prev, hidden * sizeof(double));
    std::memcpy(v.data() + hidden, input[t], p.input * sizeof(double));

    double* f = tr.f.row(t);
    double* i = tr.i.row(t);
    double* o = tr.o.row(t);
    double* g = tr.g.row(t);
    double* c = tr.c.row(t);
    double* h = tr.h.row(t);
    for (size_t j = 0; j < hidden; ++j) f[j] = sigmoid_scalar(p.b_f[j] + dot(p.w_f.row(j), v.data(), v_len));
    for (size_t j = 0; j < hidden; ++j) i[j] = sigmoid_scalar(p.b_i[j] + dot(p.w_i.row(j), v.data(), v_len));
    for (size_t j = 0; j < hidden; ++j) o[j] = sigmoid_scalar(p.b_o[j] + dot(p.w_o.row(j), v.data(), v_len));
    for (size_t j = 0; j < hidden; ++j) g[j] = std::tanh(p.b_g[j] + dot(p.w_g.row(j), v.data(), v_len));
    for (size_t j = 0; j < hidden; ++j) {
      c[j] = f[j] * c_prev[j] + i[j] * g[j];
      h[j] = o[j] * std::tanh(c[j]);
    }
  }
}

// BPTT over one direction. dh_ext is the external gradient into h_t in scan
// order; accumulates parameter gradients into g and writes the gradient with
// respect to the scanned input rows into dx (scan order).
void scan_backward(const LstmCellParams& p, const RowView& input, const DirTrace& tr,
                   const Tensor2& dh_ext, LstmCellParams& g, Tensor2& dx) {
  const size_t hidden = p.hidden, v_len = p.hidden + p.input;
  const size_t t_count = tr.h.rows;
  std::vector<double> dh(hidden, 0.0), dc(hidden, 0.0);
  std::vector<double> dzf(hidden), dzi(hidden), dzo(hidden), dzg(hidden);
  std::vector<double> v(v_len), dv(v_len);
  const std::vector<double> zero(hidden, 0.0);

  for (size_t ti = t_count; ti-- > 0;) {
    const double* h_prev = ti > 0 ? tr.h.row(ti - 1) : zero.data();
    const double* c_prev = ti > 0 ? tr.c.row(ti - 1) : zero.data();
    std::memcpy(v.data(), h_prev, hidden * sizeof(double));
    std::memcpy(v.data() + hidden, input[ti], p.input * sizeof(double));

    const double* f = tr.f.row(ti);
    const double* i = tr.i.row(ti);
    const double* o = tr.o.row(ti);
    const double* gg = tr.g.row(ti);
    const double* c = tr.c.row(ti);
    const double* dhe = dh_ext.row(ti);
    for (size_t j = 0; j < hidden; ++j) {
      const double tc = std::tanh(c[j]);
      const double dhj = dh[j] + dhe[j];
      const double doj = dhj * tc;
      dzo[j] = doj * o[j] * (1.0 - o[j]);
      const double dcj = dc[j] + dhj * o[j] * (1.0 - tc * tc);
      dzf[j] = dcj * c_prev[j] * f[j] * (1.0 - f[j]);
      dzi[j] = dcj * gg[j] * i[j] * (1.0 - i[j]);
      dzg[j] = dcj * i[j] * (1.0 - gg[j] * gg[j]);
      dc[j] = dcj * f[j];
    }

    const std::pair<Tensor2*, const std::vector<double>*> acc[4] = {
        {&g.w_f, &dzf}, {&g.w_i, &dzi}, {&g.w_o, &dzo}, {&g.w_g, &dzg}};
    std::vector<double>* bias[4] = {&g.b_f, &g.b_i, &g.b_o, &g.b_g};
    for (int k = 0; k < 4; ++k) {
      const std::vector<double>& dz = *acc[k].second;
      Tensor2& gw = *acc[k].first;
      for (size_t j = 0; j < hidden; ++j) {
        axpy(dz[j], v.data(), gw.row(j), v_len);
        (*bias[k])[j] += dz[j];
      }
    }

    std::fill(dv.begin(), dv.end(), 0.0);
    const std::pair<const Tensor2*, const std::vector<double>*> back[4] = {
        {&p.w_f, &dzf}, {&p.w_i, &dzi}, {&p.w_o, &dzo}, {&p.w_g, &dzg}};
    for (int k = 0; k < 4; ++k) {
      const std::vector<double>& dz = *back[k].second;
      const Tensor2& w = *back[k].first;
      for (size_t j = 0; j < hidden; ++j) axpy(dz[j], w.row(j), dv.data(), v_len);
    }
    std::memcpy(dh.data(), dv.data(), hidden * sizeof(double));
    std::memcpy(dx.row(ti), dv.data() + hidden, p.input * sizeof(double));
  }
}

void check_cell_shapes(const LstmCellParams& p) {
  const size_t v = p.hidden + p.input;
  for (const Tensor2* w : {&p.w_f, &p.w_i, &p.w_o, &p.w_g}) {
    require(w->rows == p.hidden && w->cols == v, Err::InvalidArgument,
            "gate weight shape mismatch");
  }
  for (const std::vector<double>* b : {&p.b_f, &p.b_i, &p.b_o, &p.b_g}) {
    require(b->size() == p.hidden, Err::InvalidArgument, "gate bias length mismatch");
  }
}

}  // namespace

ModelParams init_model(const ModelHyper& hyper, const std::vector<std::string>& genres,
                       uint64_t seed) {
  require(genres.size() == hyper.n_classes, Err::InvalidArgument,
          "genre list does not match n_classes");
  require(hyper.layers >= 1 && hyper.hidden >= 1 && hyper.input_dim >= 1, Err::InvalidArgument,
          "degenerate architecture");
  Rng rng(seed);
  ModelParams mp;
  mp.hyper = hyper;
  mp.genres = genres;
  mp.layers.resize(hyper.layers);
  for (size_t l = 0; l < hyper.layers; ++l) {
    const size_t in_dim = layer_input_dim(hyper, l);
    init_cell(mp.layers[l].fwd, hyper.hidden, in_dim, rng);
    if (hyper.bidirectional) init_cell(mp.layers[l].bwd, hyper.hidden, in_dim, rng);
    const size_t width = hyper.lstm_out_width();
    mp.layers[l].bn.gamma.assign(width, 1.0);
    mp.layers[l].bn.beta.assign(width, 0.0);
    mp.layers[l].bn.running_mean.assign(width, 0.0);
    mp.layers[l].bn.running_var.assign(width, 1.0);
  }
  init_dense(mp.dense_hidden_w, mp.dense_hidden_b, hyper.dense_dim, hyper.lstm_out_width(), rng);
  init_dense(mp.dense_out_w, mp.dense_out_b, hyper.n_classes, hyper.dense_dim, rng);
  return mp;
}

ModelGrads zeros_like(const ModelParams& params) {
  ModelGrads g = params;
  std::vector<TensorRef> refs = param_tensors(g);
  for (TensorRef& r : refs) std::fill(r.data, r.data + r.size, 0.0);
  return g;
}

void lstm_cell_step(const LstmCellParams& p, const std::vector<double>& x,
                    const std::vector<double>& h_prev, const std::vector<double>& c_prev,
                    std::vector<double>& h_out, std::vector<double>& c_out) {
  check_cell_shapes(p);
  require(x.size() == p.input && h_prev.size() == p.hidden && c_prev.size() == p.hidden,
          Err::InvalidArgument, "cell step input dimension mismatch");
  require(all_finite(x) && all_finite(h_prev) && all_finite(c_prev), Err::InvalidArgument,
          "cell step requires finite inputs");

  const size_t v_len = p.hidden + p.input;
  std::vector<double> v(v_len);
  std::copy(h_prev.begin(), h_prev.end(), v.begin());
  std::copy(x.begin(), x.end(), v.begin() + static_cast<long>(p.hidden));

  h_out.resize(p.hidden);
  c_out.resize(p.hidden);
  for (size_t j = 0; j < p.hidden; ++j) {
    const double f = sigmoid_scalar(p.b_f[j] + dot(p.w_f.row(j), v.data(), v_len));
    const double i = sigmoid_scalar(p.b_i[j] + dot(p.w_i.row(j), v.data(), v_len));
    const double o = sigmoid_scalar(p.b_o[j] + dot(p.w_o.row(j), v.data(), v_len));
    const double g = std::tanh(p.b_g[j] + dot(p.w_g.row(j), v.data(), v_len));
    c_out[j] = f * c_prev[j] + i * g;
    h_out[j] = o * std::tanh(c_out[j]);
  }
}

Tensor2 bilstm_layer(const Tensor2& seq, const LstmCellParams& fwd, const LstmCellParams& bwd) {
  check_cell_shapes(fwd);
  check_cell_shapes(bwd);
  require(seq.cols == fwd.input && seq.cols == bwd.input, Err::InvalidArgument,
          "sequence width does not match cell input");
  require(seq.rows >= 1, Err::InvalidArgument, "empty sequence");

  const size_t t_count = seq.rows, hidden = fwd.hidden;
  DirTrace tf, tb;
  scan_forward(fwd, RowView{&seq, false}, t_count, tf);
  scan_forward(bwd, RowView{&seq, true}, t_count, tb);

  Tensor2 out(t_count, 2 * hidden);
  for (size_t t = 0; t < t_count; ++t) {
    std::memcpy(out.row(t), tf.h.row(t), hidden * sizeof(double));
    std::memcpy(out.row(t) + hidden, tb.h.row(t_count - 1 - t), hidden * sizeof(double));
  }
  return out;
}

Tensor2 batch_norm(const Tensor2& x, BatchNormParams& bn, BnMode mode, double eps,
                   double momentum) {
  const size_t n = x.rows, k = x.cols;
  require(bn.gamma.size() == k && bn.beta.size() == k && bn.running_mean.size() == k &&
              bn.running_var.size() == k,
          Err::InvalidArgument, "batch_norm parameter width mismatch");

  Tensor2 out(n, k);
  if (mode == BnMode::Train) {
    require(n >= 2, Err::BatchTooSmall, "train-mode batch_norm needs at least 2 rows");
    std::vector<double> mean(k, 0.0), var(k, 0.0);
    for (size_t r = 0; r < n; ++r) {
      const double* row = x.row(r);
      for (size_t j = 0; j < k; ++j) mean[j] += row[j];
    }
    for (size_t j = 0; j < k; ++j) mean[j] /= static_cast<double>(n);
    for (size_t r = 0; r < n; ++r) {
      const double* row = x.row(r);
      for (size_t j = 0; j < k; ++j) {
        const double d = row[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (size_t j = 0; j < k; ++j) var[j] /= static_cast<double>(n);
    for (size_t r = 0; r < n; ++r) {
      const double* row = x.row(r);
      double* orow = out.row(r);
      for (size_t j = 0; j < k; ++j) {
        orow[j] = bn.gamma[j] * (row[j] - mean[j]) / std::sqrt(var[j] + eps) + bn.beta[j];
      }
    }
    for (size_t j = 0; j < k; ++j) {
      bn.running_mean[j] = momentum * bn.running_mean[j] + (1.0 - momentum) * mean[j];
      bn.running_var[j] = momentum * bn.running_var[j] + (1.0 - momentum) * var[j];
    }
  } else {
    for (size_t r = 0; r < n; ++r) {
      const double* row = x.row(r);
      double* orow = out.row(r);
      for (size_t j = 0; j < k; ++j) {
        orow[j] = bn.gamma[j] * (row[j] - bn.running_mean[j]) /
                      std::sqrt(bn.running_var[j] + eps) +
                  bn.beta[j];
      }
    }
  }
  return out;
}

void softmax_inplace(double* v, size_t n) {
  const double mx = *std::max_element(v, v + n);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    sum += v[i];
  }
  for (size_t i = 0; i < n; ++i) v[i] /= sum;
}

double cross_entropy(const std::vector<double>& probs, int target) {
  require(target >= 0 && static_cast<size_t>(target) < probs.size(), Err::InvalidArgument,
          "cross_entropy target out of range");
  return -std::log(std::max(probs[static_cast<size_t>(target)], kProbFloor));
}

double cross_entropy_frames(const Tensor2& frame_probs, int target) {
  require(target >= 0 && static_cast<size_t>(target) < frame_probs.cols, Err::InvalidArgument,
          "cross_entropy target out of range");
  double loss = 0.0;
  for (size_t t = 0; t < frame_probs.rows; ++t) {
    loss += -std::log(std::max(frame_probs(t, static_cast<size_t>(target)), kProbFloor));
  }
  return loss;
}

namespace {

// dense head: a = W1 u + b1, r = relu(a), logits = W2 r + b2, probs = softmax
void head_forward(const ModelParams& mp, const double* u, std::vector<double>& a,
                  std::vector<double>& probs) {
  const size_t dense = mp.hyper.dense_dim, classes = mp.hyper.n_classes;
  const size_t width = mp.hyper.lstm_out_width();
  a.resize(dense);
  for (size_t j = 0; j < dense; ++j) {
    a[j] = mp.dense_hidden_b[j] + dot(mp.dense_hidden_w.row(j), u, width);
  }
  probs.resize(classes);
  for (size_t j = 0; j < classes; ++j) {
    double acc = mp.dense_out_b[j];
    const double* w = mp.dense_out_w.row(j);
    for (size_t i = 0; i < dense; ++i) acc += w[i] * std::max(a[i], 0.0);
    probs[j] = acc;
  }
  softmax_inplace(probs.data(), classes);
}

// backward through the dense head for one position; accumulates into grads
// and writes the gradient with respect to the selected state into du.
void head_backward(const ModelParams& mp, ModelGrads& g, const double* u,
                   const std::vector<double>& a, const std::vector<double>& dlogits, double* du) {
  const size_t dense = mp.hyper.dense_dim, classes = mp.hyper.n_classes;
  const size_t width = mp.hyper.lstm_out_width();
  std::vector<double> da(dense, 0.0);
  for (size_t j = 0; j < classes; ++j) {
    const double dl = dlogits[j];
    double* gw = g.dense_out_w.row(j);
    const double* w = mp.dense_out_w.row(j);
    for (size_t i = 0; i < dense; ++i) {
      gw[i] += dl * std::max(a[i], 0.0);
      da[i] += dl * w[i];
    }
    g.dense_out_b[j] += dl;
  }
  for (size_t i = 0; i < dense; ++i) da[i] = a[i] > 0.0 ? da[i] : 0.0;
  for (size_t i = 0; i < dense; ++i) {
    axpy(da[i], u, g.dense_hidden_w.row(i), width);
    g.dense_hidden_b[i] += da[i];
  }
  std::fill(du, du + width, 0.0);
  for (size_t i = 0; i < dense; ++i) axpy(da[i], mp.dense_hidden_w.row(i), du, width);
}

void select_sequence_state(const ModelHyper& hyper, const Tensor2& top, std::vector<double>& u) {
  const size_t hidden = hyper.hidden;
  const size_t t_last = top.rows - 1;
  u.resize(hyper.lstm_out_width());
  if (hyper.bidirectional) {
    // forward direction's final state and backward direction's state at t=1
    std::memcpy(u.data(), top.row(t_last), hidden * sizeof(double));
    std::memcpy(u.data() + hidden, top.row(0) + hidden, hidden * sizeof(double));
  } else {
    std::memcpy(u.data(), top.row(t_last), hidden * sizeof(double));
  }
}

}  // namespace

BatchForward model_forward_batch(const ModelParams& mp, const std::vector<const Tensor2*>& seqs,
                                 BnMode bn_mode, const std::vector<int>* targets,
                                 ForwardTrace* trace, int threads) {
  const size_t batch = seqs.size();
  require(batch >= 1, Err::InvalidArgument, "empty batch");
  const size_t t_count = seqs.front()->rows;
  for (const Tensor2* s : seqs) {
    require(s->rows == t_count, Err::InvalidArgument, "batch sequences must share T");
    require(s->cols == mp.hyper.input_dim, Err::InvalidArgument,
            "sequence width does not match model input_dim");
    require(s->all_finite(), Err::InvalidArgument, "non-finite values in input sequence");
  }
  if (targets) {
    require(targets->size() == batch, Err::InvalidArgument, "target count mismatch");
    for (int y : *targets) {
      require(y >= 0 && static_cast<size_t>(y) < mp.hyper.n_classes, Err::InvalidArgument,
              "target class out of range");
    }
  }

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;
  tr = ForwardTrace{};
  tr.mode = mp.hyper.mode;
  tr.train = bn_mode == BnMode::Train;
  tr.inputs = seqs;
  tr.layers.resize(mp.layers.size());

  const size_t hidden = mp.hyper.hidden;
  const size_t width = mp.hyper.lstm_out_width();

  for (size_t l = 0; l < mp.layers.size(); ++l) {
    const BiLstmLayerParams& lp = mp.layers[l];
    LayerTrace& lt = tr.layers[l];
    lt.fwd.resize(batch);
    if (mp.hyper.bidirectional) lt.bwd.resize(batch);
    lt.out.resize(batch);

    auto layer_input = [&](size_t b) -> const Tensor2& {
      return l == 0 ? *seqs[b] : tr.layers[l - 1].out[b];
    };

    parallel_chunks(batch, threads, [&](size_t begin, size_t end, size_t) {
      for (size_t b = begin; b < end; ++b) {
        const Tensor2& in = layer_input(b);
        scan_forward(lp.fwd, RowView{&in, false}, t_count, lt.fwd[b]);
        Tensor2 concat(t_count, width);
        if (mp.hyper.bidirectional) {
          scan_forward(lp.bwd, RowView{&in, true}, t_count, lt.bwd[b]);
          for (size_t t = 0; t < t_count; ++t) {
            std::memcpy(concat.row(t), lt.fwd[b].h.row(t), hidden * sizeof(double));
            std::memcpy(concat.row(t) + hidden, lt.bwd[b].h.row(t_count - 1 - t),
                        hidden * sizeof(double));
          }
        } else {
          concat = lt.fwd[b].h;
        }
        lt.out[b] = std::move(concat);
      }
    });

    // batch norm over all B*T frames
    if (bn_mode == BnMode::Train) {
      require(batch * t_count >= 2, Err::BatchTooSmall, "training forward needs >= 2 frames");
      lt.mean.assign(width, 0.0);
      lt.var.assign(width, 0.0);
      lt.inv_std.assign(width, 0.0);
      const double n = static_cast<double>(batch * t_count);
      for (size_t b = 0; b < batch; ++b) {
        for (size_t t = 0; t < t_count; ++t) {
          const double* row = lt.out[b].row(t);
          for (size_t j = 0; j < width; ++j) lt.mean[j] += row[j];
        }
      }
      for (size_t j = 0; j < width; ++j) lt.mean[j] /= n;
      for (size_t b = 0; b < batch; ++b) {
        for (size_t t = 0; t < t_count; ++t) {
          const double* row = lt.out[b].row(t);
          for (size_t j = 0; j < width; ++j) {
            const double d = row[j] - lt.mean[j];
            lt.var[j] += d * d;
          }
        }
      }
      for (size_t j = 0; j < width; ++j) {
        lt.var[j] /= n;
        lt.inv_std[j] = 1.0 / std::sqrt(lt.var[j] + kBnEps);
      }
      lt.xhat.resize(batch);
      for (size_t b = 0; b < batch; ++b) {
        lt.xhat[b] = Tensor2(t_count, width);
        for (size_t t = 0; t < t_count; ++t) {
          const double* row = lt.out[b].row(t);
          double* xh = lt.xhat[b].row(t);
          double* orow = lt.out[b].row(t);
          for (size_t j = 0; j < width; ++j) {
            xh[j] = (row[j] - lt.mean[j]) * lt.inv_std[j];
            orow[j] = lp.bn.gamma[j] * xh[j] + lp.bn.beta[j];
          }
        }
      }
    } else {
      for (size_t b = 0; b < batch; ++b) {
        for (size_t t = 0; t < t_count; ++t) {
          double* row = lt.out[b].row(t);
          for (size_t j = 0; j < width; ++j) {
            const double xh =
                (row[j] - lp.bn.running_mean[j]) / std::sqrt(lp.bn.running_var[j] + kBnEps);
            row[j] = lp.bn.gamma[j] * xh + lp.bn.beta[j];
          }
        }
      }
    }
  }

  // heads
  BatchForward out;
  const std::vector<Tensor2>& top = tr.layers.back().out;
  double loss_sum = 0.0;
  if (mp.hyper.mode == HeadMode::Sequence) {
    tr.seq_u.resize(batch);
    tr.seq_a.resize(batch);
    tr.seq_probs.resize(batch);
    out.seq_probs.resize(batch);
    for (size_t b = 0; b < batch; ++b) {
      select_sequence_state(mp.hyper, top[b], tr.seq_u[b]);
      head_forward(mp, tr.seq_u[b].data(), tr.seq_a[b], tr.seq_probs[b]);
      out.seq_probs[b] = tr.seq_probs[b];
      if (targets) loss_sum += cross_entropy(tr.seq_probs[b], (*targets)[b]);
    }
  } else {
    tr.frame_a.resize(batch);
    tr.frame_probs.resize(batch);
    out.frame_probs.resize(batch);
    std::vector<double> a, p;
    for (size_t b = 0; b < batch; ++b) {
      tr.frame_a[b] = Tensor2(t_count, mp.hyper.dense_dim);
      tr.frame_probs[b] = Tensor2(t_count, mp.hyper.n_classes);
      for (size_t t = 0; t < t_count; ++t) {
        head_forward(mp, top[b].row(t), a, p);
        std::memcpy(tr.frame_a[b].row(t), a.data(), a.size() * sizeof(double));
        std::memcpy(tr.frame_probs[b].row(t), p.data(), p.size() * sizeof(double));
      }
      out.frame_probs[b] = tr.frame_probs[b];
      if (targets) loss_sum += cross_entropy_frames(tr.frame_probs[b], (*targets)[b]);
    }
  }
  if (targets) out.loss = loss_sum / static_cast<double>(batch);
  return out;
}

ModelGrads model_backward(const ModelParams& mp, const ForwardTrace& tr,
                          const std::vector<int>& targets, int threads) {
  require(tr.train, Err::InvalidArgument, "backward requires a training-mode trace");
  const size_t batch = tr.inputs.size();
  require(targets.size() == batch, Err::InvalidArgument, "target count mismatch");
  const size_t t_count = tr.inputs.front()->rows;
  const size_t hidden = mp.hyper.hidden;
  const size_t width = mp.hyper.lstm_out_width();
  const size_t classes = mp.hyper.n_classes;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  ModelGrads grads = zeros_like(mp);

  // head backward -> gradient into the top layer's post-BN output
  std::vector<Tensor2> d_out(batch);
  for (size_t b = 0; b < batch; ++b) d_out[b] = Tensor2(t_count, width);

  if (tr.mode == HeadMode::Sequence) {
    std::vector<double> dlogits(classes), du(width);
    for (size_t b = 0; b < batch; ++b) {
      for (size_t j = 0; j < classes; ++j) {
        dlogits[j] = (tr.seq_probs[b][j] - (static_cast<size_t>(targets[b]) == j ? 1.0 : 0.0)) *
                     inv_batch;
      }
      head_backward(mp, grads, tr.seq_u[b].data(), tr.seq_a[b], dlogits, du.data());
      if (mp.hyper.bidirectional) {
        std::memcpy(d_out[b].row(t_count - 1), du.data(), hidden * sizeof(double));
        double* first = d_out[b].row(0);
        for (size_t j = 0; j < hidden; ++j) first[hidden + j] += du[hidden + j];
      } else {
        std::memcpy(d_out[b].row(t_count - 1), du.data(), width * sizeof(double));
      }
    }
  } else {
    std::vector<double> dlogits(classes), du(width), a(mp.hyper.dense_dim);
    for (size_t b = 0; b < batch; ++b) {
      const Tensor2& top = tr.layers.back().out[b];
      for (size_t t = 0; t < t_count; ++t) {
        const double* p = tr.frame_probs[b].row(t);
        for (size_t j = 0; j < classes; ++j) {
          dlogits[j] = (p[j] - (static_cast<size_t>(targets[b]) == j ? 1.0 : 0.0)) * inv_batch;
        }
        a.assign(tr.frame_a[b].row(t), tr.frame_a[b].row(t) + mp.hyper.dense_dim);
        head_backward(mp, grads, top.row(t), a, dlogits, du.data());
        double* dst = d_out[b].row(t);
        for (size_t j = 0; j < width; ++j) dst[j] += du[j];
      }
    }
  }

  // layers, top down
  for (size_t l = mp.layers.size(); l-- > 0;) {
    const BiLstmLayerParams& lp = mp.layers[l];
    const LayerTrace& lt = tr.layers[l];

    // batch-norm backward through the batch statistics
    const double n = static_cast<double>(batch * t_count);
    std::vector<double> sum_dy(width, 0.0), sum_dyx(width, 0.0);
    for (size_t b = 0; b < batch; ++b) {
      for (size_t t = 0; t < t_count; ++t) {
        const double* dy = d_out[b].row(t);
        const double* xh = lt.xhat[b].row(t);
        for (size_t j = 0; j < width; ++j) {
          sum_dy[j] += dy[j];
          sum_dyx[j] += dy[j] * xh[j];
        }
      }
    }
    for (size_t j = 0; j < width; ++j) {
      grads.layers[l].bn.gamma[j] += sum_dyx[j];
      grads.layers[l].bn.beta[j] += sum_dy[j];
    }
    for (size_t b = 0; b < batch; ++b) {
      for (size_t t = 0; t < t_count; ++t) {
        double* dy = d_out[b].row(t);
        const double* xh = lt.xhat[b].row(t);
        for (size_t j = 0; j < width; ++j) {
          dy[j] = lp.bn.gamma[j] * lt.inv_std[j] *
                  (dy[j] - sum_dy[j] / n - xh[j] * sum_dyx[j] / n);
        }
      }
    }

    // per-sequence BPTT; chunk-local gradient buffers merged in chunk order
    const size_t in_dim = layer_input_dim(mp.hyper, l);
    std::vector<Tensor2> d_in(batch);
    const int nchunks = std::max(1, std::min<int>(threads, static_cast<int>(batch)));
    std::vector<LstmCellParams> fwd_acc(nchunks), bwd_acc(nchunks);
    for (int c = 0; c < nchunks; ++c) {
      fwd_acc[c] = lp.fwd;
      for (Tensor2* w : {&fwd_acc[c].w_f, &fwd_acc[c].w_i, &fwd_acc[c].w_o, &fwd_acc[c].w_g}) w->zero();
      for (std::vector<double>* b :
           {&fwd_acc[c].b_f, &fwd_acc[c].b_i, &fwd_acc[c].b_o, &fwd_acc[c].b_g}) {
        std::fill(b->begin(), b->end(), 0.0);
      }
      if (mp.hyper.bidirectional) {
        bwd_acc[c] = lp.bwd;
        for (Tensor2* w : {&bwd_acc[c].w_f, &bwd_acc[c].w_i, &bwd_acc[c].w_o, &bwd_acc[c].w_g}) w->zero();
        for (std::vector<double>* b :
             {&bwd_acc[c].b_f, &bwd_acc[c].b_i, &bwd_acc[c].b_o, &bwd_acc[c].b_g}) {
          std::fill(b->begin(), b->end(), 0.0);
        }
      }
    }

    parallel_chunks(batch, nchunks, [&](size_t begin, size_t end, size_t chunk) {
      Tensor2 dh_ext(t_count, hidden), dx(t_count, in_dim);
      for (size_t b = begin; b < end; ++b) {
        const Tensor2& in = l == 0 ? *tr.inputs[b] : tr.layers[l - 1].out[b];
        d_in[b] = Tensor2(t_count, in_dim);

        // forward direction
        for (size_t t = 0; t < t_count; ++t) {
          std::memcpy(dh_ext.row(t), d_out[b].row(t), hidden * sizeof(double));
        }
        dx.zero();
        scan_backward(lp.fwd, RowView{&in, false}, lt.fwd[b], dh_ext, fwd_acc[chunk], dx);
        for (size_t t = 0; t < t_count; ++t) {
          axpy(1.0, dx.row(t), d_in[b].row(t), in_dim);
        }

        if (mp.hyper.bidirectional) {
          // backward direction: scan order s corresponds to original t = T-1-s
          for (size_t s = 0; s < t_count; ++s) {
            std::memcpy(dh_ext.row(s), d_out[b].row(t_count - 1 - s) + hidden,
                        hidden * sizeof(double));
          }
          dx.zero();
          scan_backward(lp.bwd, RowView{&in, true}, lt.bwd[b], dh_ext, bwd_acc[chunk], dx);
          for (size_t s = 0; s < t_count; ++s) {
            axpy(1.0, dx.row(s), d_in[b].row(t_count - 1 - s), in_dim);
          }
        }
      }
    });

    auto merge_cell = [](LstmCellParams& dst, const LstmCellParams& src) {
      axpy(1.0, src.w_f.data.data(), dst.w_f.data.data(), dst.w_f.size());
      axpy(1.0, src.w_i.data.data(), dst.w_i.data.data(), dst.w_i.size());
      axpy(1.0, src.w_o.data.data(), dst.w_o.data.data(), dst.w_o.size());
      axpy(1.0, src.w_g.data.data(), dst.w_g.data.data(), dst.w_g.size());
      axpy(1.0, src.b_f.data(), dst.b_f.data(), dst.b_f.size());
      axpy(1.0, src.b_i.data(), dst.b_i.data(), dst.b_i.size());
      axpy(1.0, src.b_o.data(), dst.b_o.data(), dst.b_o.size());
      axpy(1.0, src.b_g.data(), dst.b_g.data(), dst.b_g.size());
    };
    for (int c = 0; c < nchunks; ++c) {
      merge_cell(grads.layers[l].fwd, fwd_acc[c]);
      if (mp.hyper.bidirectional) merge_cell(grads.layers[l].bwd, bwd_acc[c]);
    }

    d_out = std::move(d_in);  // feeds the layer below
  }

  return grads;
}

void commit_running_stats(ModelParams& params, const ForwardTrace& trace, double momentum) {
  require(trace.train, Err::InvalidArgument, "running stats come from a training-mode trace");
  for (size_t l = 0; l < params.layers.size(); ++l) {
    BatchNormParams& bn = params.layers[l].bn;
    const LayerTrace& lt = trace.layers[l];
    for (size_t j = 0; j < bn.running_mean.size(); ++j) {
      bn.running_mean[j] = momentum * bn.running_mean[j] + (1.0 - momentum) * lt.mean[j];
      bn.running_var[j] = momentum * bn.running_var[j] + (1.0 - momentum) * lt.var[j];
    }
  }
}

double batch_loss(const ModelParams& params, const std::vector<const Tensor2*>& seqs,
                  const std::vector<int>& targets, BnMode bn_mode, int threads) {
  return model_forward_batch(params, seqs, bn_mode, &targets, nullptr, threads).loss;
}

std::vector<double> predict_distribution(const ModelParams& params, const Tensor2& seq) {
  std::vector<const Tensor2*> one{&seq};
  BatchForward fwd = model_forward_batch(params, one, BnMode::Infer, nullptr, nullptr, 1);
  if (params.hyper.mode == HeadMode::Sequence) return fwd.seq_probs.front();
  const Tensor2& fp = fwd.frame_probs.front();
  std::vector<double> mean(fp.cols, 0.0);
  for (size_t t = 0; t < fp.rows; ++t) {
    for (size_t j = 0; j < fp.cols; ++j) mean[j] += fp(t, j);
  }
  for (double& v : mean) v /= static_cast<double>(fp.rows);
  return mean;
}

// ---- optimizer ----

std::vector<TensorRef> param_tensors(ModelParams& params) {
  std::vector<TensorRef> refs;
  auto add_mat = [&](const std::string& name, Tensor2& t, bool trainable) {
    refs.push_back({name, t.data.data(), t.size(), {t.rows, t.cols}, trainable});
  };
  auto add_vec = [&](const std::string& name, std::vector<double>& v, bool trainable) {
    refs.push_back({name, v.data(), v.size(), {v.size()}, trainable});
  };
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    auto add_cell = [&](const std::string& dir, LstmCellParams& c) {
      add_mat(base + dir + ".w_f", c.w_f, true);
      add_mat(base + dir + ".w_i", c.w_i, true);
      add_mat(base + dir + ".w_o", c.w_o, true);
      add_mat(base + dir + ".w_g", c.w_g, true);
      add_vec(base + dir + ".b_f", c.b_f, true);
      add_vec(base + dir + ".b_i", c.b_i, true);
      add_vec(base + dir + ".b_o", c.b_o, true);
      add_vec(base + dir + ".b_g", c.b_g, true);
    };
    add_cell("fwd", params.layers[l].fwd);
    if (params.hyper.bidirectional) add_cell("bwd", params.layers[l].bwd);
    add_vec(base + "bn.gamma", params.layers[l].bn.gamma, true);
    add_vec(base + "bn.beta", params.layers[l].bn.beta, true);
    add_vec(base + "bn.running_mean", params.layers[l].bn.running_mean, false);
    add_vec(base + "bn.running_var", params.layers[l].bn.running_var, false);
  }
  add_mat("dense_hidden.w", params.dense_hidden_w, true);
  add_vec("dense_hidden.b", params.dense_hidden_b, true);
  add_mat("dense_out.w", params.dense_out_w, true);
  add_vec("dense_out.b", params.dense_out_b, true);
  return refs;
}

AdamState make_adam_state(const ModelParams& params) {
  ModelParams& mutable_params = const_cast<ModelParams&>(params);
  AdamState st;
  for (const TensorRef& r : param_tensors(mutable_params)) {
    if (!r.trainable) continue;
    st.m.emplace_back(r.size, 0.0);
    st.v.emplace_back(r.size, 0.0);
  }
  return st;
}

void adam_step(ModelParams& params, ModelParams& grads, AdamState& state, const AdamConfig& cfg) {
  std::vector<TensorRef> p = param_tensors(params);
  std::vector<TensorRef> g = param_tensors(grads);
  require(p.size() == g.size(), Err::InvalidArgument, "param/grad layout mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  size_t slot = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (!p[i].trainable) continue;
    require(p[i].size == g[i].size, Err::InvalidArgument, "grad tensor shape mismatch");
    std::vector<double>& m = state.m[slot];
    std::vector<double>& v = state.v[slot];
    ++slot;
    for (size_t k = 0; k < p[i].size; ++k) {
      const double gk = g[i].data[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[i].data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double gradient_clip(ModelGrads& grads, double max_norm) {
  require(max_norm > 0.0, Err::InvalidArgument, "max_norm must be positive");
  double sq = 0.0;
  std::vector<TensorRef> refs = param_tensors(grads);
  for (const TensorRef& r : refs) {
    if (!r.trainable) continue;
    for (size_t k = 0; k < r.size; ++k) sq += r.data[k] * r.data[k];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const TensorRef& r : refs) {
      if (!r.trainable) continue;
      for (size_t k = 0; k < r.size; ++k) r.data[k] *= scale;
    }
  }
  return norm;
}

// ---- BMGC1 container ----

namespace {

constexpr const char* kModelMagic = "BMGC1\n";
constexpr uint32_t kModelVersion = 1;

std::map<std::string, std::string> parse_kv(const std::string& meta) {
  std::map<std::string, std::string> kv;
  size_t pos = 0;
  while (pos < meta.size()) {
    size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    const std::string line = meta.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, Err::ParseError, "model metadata line missing '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  size_t pos = 0;
  while (true) {
    const size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return parts;
}

}  // namespace

void save_model(const std::string& path, const ModelParams& params, const NormStats& stats,
                const std::map<std::string, std::string>& extra_meta) {
  ModelParams& mp = const_cast<ModelParams&>(params);
  std::vector<TensorRef> refs = param_tensors(mp);

  std::string meta;
  meta += "input_dim=" + std::to_string(params.hyper.input_dim) + "\n";
  meta += "hidden=" + std::to_string(params.hyper.hidden) + "\n";
  meta += "layers=" + std::to_string(params.hyper.layers) + "\n";
  meta += "dense_dim=" + std::to_string(params.hyper.dense_dim) + "\n";
  meta += "n_classes=" + std::to_string(params.hyper.n_classes) + "\n";
  meta += std::string("bidirectional=") + (params.hyper.bidirectional ? "1" : "0") + "\n";
  meta += std::string("mode=") + (params.hyper.mode == HeadMode::Sequence ? "sequence" : "frame") +
          "\n";
  meta += "genres=" + join(params.genres, ',') + "\n";
  meta += "normalizer=embedded\n";
  for (const auto& [k, v] : extra_meta) meta += k + "=" + v + "\n";

  // norm stats ride along as ordinary tensors
  std::vector<double> mu = stats.mu, sigma = stats.sigma;
  refs.push_back({"norm.mu", mu.data(), mu.size(), {mu.size()}, false});
  refs.push_back({"norm.sigma", sigma.data(), sigma.size(), {sigma.size()}, false});

  ByteWriter w;
  w.str(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<uint32_t>(meta.size()));
  w.str(meta);
  w.u32(static_cast<uint32_t>(refs.size()));
  uint64_t offset = 0;
  for (const TensorRef& r : refs) {
    w.u32(static_cast<uint32_t>(r.name.size()));
    w.str(r.name);
    w.u32(static_cast<uint32_t>(r.dims.size()));
    for (size_t d : r.dims) w.u32(static_cast<uint32_t>(d));
    w.u64(offset);
    offset += 4 * r.size;
  }
  for (const TensorRef& r : refs) {
    for (size_t k = 0; k < r.size; ++k) w.f32(static_cast<float>(r.data[k]));
  }
  write_file(path, w.data());
}

LoadedModel load_model(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  ByteReader r(bytes, Err::TruncatedFile);
  require(r.remaining() >= 6, Err::TruncatedFile, path + ": too small for header");
  require(r.str(6) == kModelMagic, Err::BadMagic, path + " is not a BMGC1 model file");
  const uint32_t version = r.u32();
  require(version == kModelVersion, Err::VersionMismatch,
          path + ": container version " + std::to_string(version));
  const uint32_t meta_len = r.u32();
  std::map<std::string, std::string> meta = parse_kv(r.str(meta_len));

  for (const char* key : {"input_dim", "hidden", "layers", "dense_dim", "n_classes",
                          "bidirectional", "mode", "genres"}) {
    require(meta.count(key) > 0, Err::ParseError, path + ": missing metadata key " + key);
  }
  ModelHyper hyper;
  hyper.input_dim = std::stoull(meta.at("input_dim"));
  hyper.hidden = std::stoull(meta.at("hidden"));
  hyper.layers = std::stoull(meta.at("layers"));
  hyper.dense_dim = std::stoull(meta.at("dense_dim"));
  hyper.n_classes = std::stoull(meta.at("n_classes"));
  hyper.bidirectional = meta.at("bidirectional") == "1";
  hyper.mode = meta.at("mode") == "frame" ? HeadMode::Frame : HeadMode::Sequence;
  std::vector<std::string> genres = split(meta.at("genres"), ',');
  require(genres.size() == hyper.n_classes, Err::ShapeChainBroken,
          path + ": genre list does not match n_classes");

  LoadedModel loaded;
  loaded.meta = meta;
  loaded.params = init_model(hyper, genres, 0);

  struct DirEntry {
    std::string name;
    std::vector<size_t> dims;
    uint64_t offset;
    size_t numel;
  };
  const uint32_t count = r.u32();
  std::vector<DirEntry> entries(count);
  for (DirEntry& e : entries) {
    const uint32_t name_len = r.u32();
    e.name = r.str(name_len);
    const uint32_t rank = r.u32();
    require(rank >= 1 && rank <= 2, Err::ShapeChainBroken, path + ": bad rank for " + e.name);
    e.numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      e.dims.push_back(dim);
      e.numel *= dim;
    }
    e.offset = r.u64();
  }
  const size_t payload_base = r.pos();
  const size_t payload_size = bytes.size() - payload_base;

  std::map<std::string, const DirEntry*> by_name;
  for (const DirEntry& e : entries) {
    require(by_name.emplace(e.name, &e).second, Err::ShapeChainBroken,
            path + ": duplicate tensor " + e.name);
  }

  std::vector<TensorRef> refs = param_tensors(loaded.params);
  loaded.stats.mu.clear();
  loaded.stats.sigma.clear();
  std::vector<double> mu, sigma;
  refs.push_back({"norm.mu", nullptr, 0, {}, false});
  refs.push_back({"norm.sigma", nullptr, 0, {}, false});

  for (TensorRef& ref : refs) {
    auto it = by_name.find(ref.name);
    require(it != by_name.end(), Err::ShapeChainBroken, path + ": missing tensor " + ref.name);
    const DirEntry& e = *it->second;
    const bool is_norm = ref.name == "norm.mu" || ref.name == "norm.sigma";
    if (is_norm) {
      require(e.dims.size() == 1 && e.dims[0] == hyper.input_dim, Err::ShapeChainBroken,
              path + ": normalizer width does not match input_dim");
    } else {
      require(e.dims == ref.dims, Err::ShapeChainBroken,
              path + ": shape mismatch for " + ref.name);
    }
    require(e.offset + 4 * e.numel <= payload_size, Err::TruncatedFile,
            path + ": payload truncated at " + ref.name);
    ByteReader pr(bytes.data() + payload_base + e.offset, 4 * e.numel, Err::TruncatedFile);
    if (is_norm) {
      std::vector<double>& dst = ref.name == "norm.mu" ? loaded.stats.mu : loaded.stats.sigma;
      dst.resize(e.numel);
      for (double& v : dst) v = static_cast<double>(pr.f32());
    } else {
      for (size_t k = 0; k < ref.size; ++k) ref.data[k] = static_cast<double>(pr.f32());
    }
  }

  for (const BiLstmLayerParams& l : loaded.params.layers) {
    for (double v : l.bn.running_var) {
      require(v > 0.0, Err::ParseError, path + ": running variance must stay positive");
    }
  }
  return loaded;
}

}  // namespace bmgc
