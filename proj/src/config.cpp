#include "bmgc/config.hpp"

#include <cstdio>
#include <map>

#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/parallel.hpp"

namespace bmgc {

FeatureConfig RunConfig::feature_config() const {
  FeatureConfig fc;
  fc.sample_rate = sample_rate;
  fc.seg_seconds = seg_seconds;
  fc.frame_len = frame_len;
  fc.hop = hop;
  fc.n_mels = n_mels;
  fc.n_mfcc = n_mfcc;
  fc.delta_width = delta_width;
  fc.fmin = fmin;
  fc.fmax = fmax;
  return fc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.hidden = hidden;
  tc.layers = layers;
  tc.dense_dim = dense_dim;
  tc.bidirectional = bidirectional;
  tc.mode = mode == "frame" ? HeadMode::Frame : HeadMode::Sequence;
  tc.batch = batch;
  tc.max_epochs = max_epochs;
  tc.patience = patience;
  tc.lr = lr;
  tc.beta1 = beta1;
  tc.beta2 = beta2;
  tc.adam_eps = adam_eps;
  tc.grad_clip = grad_clip;
  tc.seed = seed;
  tc.threads = deterministic ? 1 : resolve_threads(threads);
  tc.deterministic = deterministic;
  return tc;
}

namespace {

double to_f(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    require(used == v.size(), Err::ParseError, "");
    return out;
  } catch (...) {
    fail(Err::ParseError, "config: bad number for " + key + ": '" + v + "'");
  }
}

uint64_t to_u(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t out = std::stoull(v, &used);
    require(used == v.size(), Err::ParseError, "");
    return out;
  } catch (...) {
    fail(Err::ParseError, "config: bad integer for " + key + ": '" + v + "'");
  }
}

bool to_b(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail(Err::ParseError, "config: bad boolean for " + key + ": '" + v + "'");
}

std::string fnum(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "sample_rate") sample_rate = to_f(key, value);
  else if (key == "seg_seconds") seg_seconds = to_f(key, value);
  else if (key == "frame_len") frame_len = to_u(key, value);
  else if (key == "hop") hop = to_u(key, value);
  else if (key == "n_mels") n_mels = to_u(key, value);
  else if (key == "n_mfcc") n_mfcc = to_u(key, value);
  else if (key == "delta_width") delta_width = to_u(key, value);
  else if (key == "fmin") fmin = to_f(key, value);
  else if (key == "fmax") fmax = to_f(key, value);
  else if (key == "hidden") hidden = to_u(key, value);
  else if (key == "layers") layers = to_u(key, value);
  else if (key == "dense_dim") dense_dim = to_u(key, value);
  else if (key == "bidirectional") bidirectional = to_b(key, value);
  else if (key == "mode") {
    require(value == "sequence" || value == "frame", Err::ParseError,
            "config: mode must be 'sequence' or 'frame'");
    mode = value;
  } else if (key == "batch") batch = to_u(key, value);
  else if (key == "max_epochs") max_epochs = to_u(key, value);
  else if (key == "patience") patience = to_u(key, value);
  else if (key == "lr") lr = to_f(key, value);
  else if (key == "beta1") beta1 = to_f(key, value);
  else if (key == "beta2") beta2 = to_f(key, value);
  else if (key == "adam_eps") adam_eps = to_f(key, value);
  else if (key == "grad_clip") grad_clip = to_f(key, value);
  else if (key == "train_frac") fractions[0] = to_f(key, value);
  else if (key == "val_frac") fractions[1] = to_f(key, value);
  else if (key == "test_frac") fractions[2] = to_f(key, value);
  else if (key == "knn_k") knn_k = to_u(key, value);
  else if (key == "logreg_epochs") logreg_epochs = to_u(key, value);
  else if (key == "logreg_lr") logreg_lr = to_f(key, value);
  else if (key == "seed") seed = to_u(key, value);
  else if (key == "threads") threads = static_cast<int>(to_u(key, value));
  else if (key == "deterministic") deterministic = to_b(key, value);
  else if (key == "per_class") per_class = to_u(key, value);
  else fail(Err::ParseError, "config: unknown key '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> kv;
  kv["sample_rate"] = fnum(sample_rate);
  kv["seg_seconds"] = fnum(seg_seconds);
  kv["frame_len"] = std::to_string(frame_len);
  kv["hop"] = std::to_string(hop);
  kv["n_mels"] = std::to_string(n_mels);
  kv["n_mfcc"] = std::to_string(n_mfcc);
  kv["delta_width"] = std::to_string(delta_width);
  kv["fmin"] = fnum(fmin);
  kv["fmax"] = fnum(fmax);
  kv["hidden"] = std::to_string(hidden);
  kv["layers"] = std::to_string(layers);
  kv["dense_dim"] = std::to_string(dense_dim);
  kv["bidirectional"] = bidirectional ? "1" : "0";
  kv["mode"] = mode;
  kv["batch"] = std::to_string(batch);
  kv["max_epochs"] = std::to_string(max_epochs);
  kv["patience"] = std::to_string(patience);
  kv["lr"] = fnum(lr);
  kv["beta1"] = fnum(beta1);
  kv["beta2"] = fnum(beta2);
  kv["adam_eps"] = fnum(adam_eps);
  kv["grad_clip"] = fnum(grad_clip);
  kv["train_frac"] = fnum(fractions[0]);
  kv["val_frac"] = fnum(fractions[1]);
  kv["test_frac"] = fnum(fractions[2]);
  kv["knn_k"] = std::to_string(knn_k);
  kv["logreg_epochs"] = std::to_string(logreg_epochs);
  kv["logreg_lr"] = fnum(logreg_lr);
  kv["seed"] = std::to_string(seed);
  kv["threads"] = std::to_string(threads);
  kv["deterministic"] = deterministic ? "1" : "0";
  kv["per_class"] = std::to_string(per_class);

  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

RunConfig parse_config_file(const std::string& path, RunConfig base) {
  const std::string text = read_text_file(path);
  size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, Err::ParseError,
            path + ":" + std::to_string(line_no) + ": expected key=value");
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

}  // namespace bmgc
