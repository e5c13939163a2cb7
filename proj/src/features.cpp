#include "bmgc/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bmgc/dsp.hpp"
#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"

namespace bmgc {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

FrameMatrix frame_signal(const AudioClip& clip, size_t frame_len, size_t hop) {
  require(hop > 0, Err::InvalidArgument, "frame_signal: hop must be positive");
  require(frame_len > 0, Err::InvalidArgument, "frame_signal: frame_len must be positive");
  const size_t n = clip.samples.size();
  require(frame_len <= n, Err::FrameLongerThanClip,
          "frame of " + std::to_string(frame_len) + " samples exceeds clip of " +
              std::to_string(n));

  const size_t t_count = (n - frame_len) / hop + 1;
  FrameMatrix fm;
  fm.frame_len = frame_len;
  fm.hop = hop;
  fm.sample_rate = clip.sample_rate;
  fm.frames = Tensor2(t_count, frame_len);
  for (size_t t = 0; t < t_count; ++t) {
    std::copy_n(clip.samples.begin() + static_cast<long>(t * hop), frame_len, fm.frames.row(t));
  }
  return fm;
}

Tensor2 stft_power(const FrameMatrix& frames) {
  const size_t n_fft = frames.frame_len;
  require(is_pow2(n_fft), Err::InvalidArgument, "stft_power: frame_len must be a power of two");
  const std::vector<double> window = hann_window(n_fft);
  const size_t t_count = frames.frames.rows;

  Tensor2 spec(t_count, n_fft / 2 + 1);
  std::vector<double> buf(n_fft);
  for (size_t t = 0; t < t_count; ++t) {
    const double* src = frames.frames.row(t);
    for (size_t i = 0; i < n_fft; ++i) buf[i] = src[i] * window[i];
    std::vector<double> p = real_power_spectrum(buf.data(), n_fft);
    std::copy(p.begin(), p.end(), spec.row(t));
  }
  return spec;
}

MelFilterBank build_mel_filterbank(size_t n_mels, size_t n_fft, double sample_rate, double fmin,
                                   double fmax) {
  require(n_mels >= 2, Err::InvalidArgument, "filterbank needs at least 2 filters");
  require(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0 + 1e-9, Err::InvalidArgument,
          "need 0 <= fmin < fmax <= sample_rate/2");
  require(is_pow2(n_fft), Err::InvalidArgument, "n_fft must be a power of two");

  const size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> pts(n_mels + 2);
  for (size_t m = 0; m < pts.size(); ++m) {
    pts[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                    static_cast<double>(n_mels + 1));
  }

  MelFilterBank bank;
  bank.fmin = fmin;
  bank.fmax = fmax;
  bank.sample_rate = sample_rate;
  bank.n_fft = n_fft;
  bank.weights = Tensor2(n_mels, n_bins);

  const double bin_hz = sample_rate / static_cast<double>(n_fft);
  for (size_t m = 0; m < n_mels; ++m) {
    const double left = pts[m], center = pts[m + 1], right = pts[m + 2];
    require(center > left && right > center, Err::DegenerateBand,
            "mel points collapsed at filter " + std::to_string(m));
    double* row = bank.weights.row(m);
    double row_sum = 0.0;
    for (size_t k = 0; k < n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      const double w = std::min((f - left) / (center - left), (right - f) / (right - center));
      row[k] = std::max(0.0, w);
      row_sum += row[k];
    }
    require(row_sum > 0.0, Err::DegenerateBand,
            "filter " + std::to_string(m) + " covers no FFT bin");
  }
  return bank;
}

std::vector<double> dct2_orthonormal(const std::vector<double>& row, size_t n_out) {
  const size_t m = row.size();
  std::vector<double> out(n_out, 0.0);
  for (size_t j = 0; j < n_out; ++j) {
    double acc = 0.0;
    for (size_t i = 0; i < m; ++i) {
      acc += row[i] * std::cos(M_PI * static_cast<double>(j) * (2.0 * static_cast<double>(i) + 1.0) /
                               (2.0 * static_cast<double>(m)));
    }
    const double scale = j == 0 ? std::sqrt(1.0 / static_cast<double>(m))
                                : std::sqrt(2.0 / static_cast<double>(m));
    out[j] = scale * acc;
  }
  return out;
}

Tensor2 mfcc(const Tensor2& spec, const MelFilterBank& bank, size_t n_mfcc) {
  require(spec.cols == bank.weights.cols, Err::InvalidArgument,
          "spectrogram bins do not match filterbank");
  const size_t t_count = spec.rows;
  const size_t n_mels = bank.weights.rows;

  // precompute the DCT basis once per call
  Tensor2 basis(n_mfcc, n_mels);
  for (size_t j = 0; j < n_mfcc; ++j) {
    const double scale = j == 0 ? std::sqrt(1.0 / static_cast<double>(n_mels))
                                : std::sqrt(2.0 / static_cast<double>(n_mels));
    for (size_t i = 0; i < n_mels; ++i) {
      basis(j, i) = scale * std::cos(M_PI * static_cast<double>(j) *
                                     (2.0 * static_cast<double>(i) + 1.0) /
                                     (2.0 * static_cast<double>(n_mels)));
    }
  }

  Tensor2 out(t_count, n_mfcc);
  std::vector<double> logmel(n_mels);
  for (size_t t = 0; t < t_count; ++t) {
    const double* s = spec.row(t);
    for (size_t m = 0; m < n_mels; ++m) {
      logmel[m] = std::log(dot(bank.weights.row(m), s, spec.cols) + kLogFloor);
    }
    for (size_t j = 0; j < n_mfcc; ++j) out(t, j) = dot(basis.row(j), logmel.data(), n_mels);
  }
  return out;
}

Tensor2 delta(const Tensor2& feat, size_t half_width) {
  require(half_width >= 1, Err::InvalidArgument, "delta: half_width must be >= 1");
  const size_t t_count = feat.rows, k = feat.cols;
  require(t_count >= 1, Err::InvalidArgument, "delta: empty feature matrix");

  double denom = 0.0;
  for (size_t n = 1; n <= half_width; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;

  auto clamp_row = [&](long t) {
    return feat.row(static_cast<size_t>(std::clamp(t, 0L, static_cast<long>(t_count) - 1)));
  };

  Tensor2 out(t_count, k);
  for (size_t t = 0; t < t_count; ++t) {
    for (size_t n = 1; n <= half_width; ++n) {
      const double* ahead = clamp_row(static_cast<long>(t) + static_cast<long>(n));
      const double* behind = clamp_row(static_cast<long>(t) - static_cast<long>(n));
      const double w = static_cast<double>(n) / denom;
      double* o = out.row(t);
      for (size_t j = 0; j < k; ++j) o[j] += w * (ahead[j] - behind[j]);
    }
  }
  return out;
}

Tensor2 chroma(const Tensor2& spec, double sample_rate) {
  const size_t n_bins = spec.cols;
  const size_t n_fft = 2 * (n_bins - 1);
  const double bin_hz = sample_rate / static_cast<double>(n_fft);

  // bin -> pitch class, class 0 = C (A4 = 440 Hz sits 9 semitones above C)
  std::vector<int> cls(n_bins, -1);
  for (size_t k = 1; k < n_bins; ++k) {
    const double f = bin_hz * static_cast<double>(k);
    const long semis = std::lround(12.0 * std::log2(f / 440.0)) + 9;
    cls[k] = static_cast<int>(((semis % 12) + 12) % 12);
  }

  Tensor2 out(spec.rows, 12);
  for (size_t t = 0; t < spec.rows; ++t) {
    const double* s = spec.row(t);
    double* o = out.row(t);
    for (size_t k = 1; k < n_bins; ++k) o[cls[k]] += s[k];
    const double mx = *std::max_element(o, o + 12);
    if (mx > 0.0) {
      for (int c = 0; c < 12; ++c) o[c] /= mx;
    }
  }
  return out;
}

Tensor2 aux_descriptors(const FrameMatrix& frames, const Tensor2& spec) {
  require(frames.frames.rows == spec.rows, Err::InvalidArgument,
          "aux_descriptors: frame/spectrogram row mismatch");
  const size_t t_count = spec.rows;
  const size_t n_bins = spec.cols;
  const size_t n_fft = 2 * (n_bins - 1);
  const double bin_hz = frames.sample_rate / static_cast<double>(n_fft);

  Tensor2 out(t_count, 5);
  for (size_t t = 0; t < t_count; ++t) {
    const double* x = frames.frames.row(t);
    const double* p = spec.row(t);

    // zero crossing rate, sign(0) counts as positive
    size_t crossings = 0;
    for (size_t i = 0; i + 1 < frames.frame_len; ++i) {
      const bool a = x[i] >= 0.0, b = x[i + 1] >= 0.0;
      if (a != b) ++crossings;
    }
    const double zcr = static_cast<double>(crossings) / static_cast<double>(frames.frame_len - 1);

    double total = 0.0, weighted = 0.0;
    for (size_t k = 0; k < n_bins; ++k) {
      total += p[k];
      weighted += p[k] * bin_hz * static_cast<double>(k);
    }
    const double centroid = total > 0.0 ? weighted / total : 0.0;

    double rolloff = 0.0;
    if (total > 0.0) {
      double cum = 0.0;
      for (size_t k = 0; k < n_bins; ++k) {
        cum += p[k];
        if (cum >= 0.85 * total) {
          rolloff = bin_hz * static_cast<double>(k);
          break;
        }
      }
    }

    double bw = 0.0;
    if (total > 0.0) {
      double acc = 0.0;
      for (size_t k = 0; k < n_bins; ++k) {
        const double d = bin_hz * static_cast<double>(k) - centroid;
        acc += p[k] * d * d;
      }
      bw = std::sqrt(acc / total);
    }

    double sq = 0.0;
    for (size_t i = 0; i < frames.frame_len; ++i) sq += x[i] * x[i];
    const double rms = std::sqrt(sq / static_cast<double>(frames.frame_len));

    out(t, 0) = zcr;
    out(t, 1) = centroid;
    out(t, 2) = rolloff;
    out(t, 3) = bw;
    out(t, 4) = rms;
  }
  return out;
}

FeatureSequence assemble(const AudioClip& clip, const FeatureConfig& cfg,
                         const MelFilterBank& bank) {
  return extract_segment(clip, cfg, bank).features;
}

ExtractedSegment extract_segment(const AudioClip& clip, const FeatureConfig& cfg,
                                 const MelFilterBank& bank) {
  require(clip.sample_rate == cfg.sample_rate, Err::InvalidArgument,
          "segment rate differs from the configured canonical rate");
  FrameMatrix frames = frame_signal(clip, cfg.frame_len, cfg.hop);
  Tensor2 spec = stft_power(frames);
  Tensor2 mf = mfcc(spec, bank, cfg.n_mfcc);
  Tensor2 dmf = delta(mf, cfg.delta_width);
  Tensor2 ch = chroma(spec, cfg.sample_rate);

  const size_t t_count = mf.rows;
  ExtractedSegment seg;
  seg.features.source = clip.source_path;
  seg.features.x = Tensor2(t_count, cfg.n_mfcc * 2 + 12);
  for (size_t t = 0; t < t_count; ++t) {
    double* o = seg.features.x.row(t);
    std::copy_n(mf.row(t), cfg.n_mfcc, o);
    std::copy_n(dmf.row(t), cfg.n_mfcc, o + cfg.n_mfcc);
    std::copy_n(ch.row(t), 12, o + 2 * cfg.n_mfcc);
  }
  require(seg.features.x.all_finite(), Err::InvalidArgument,
          "non-finite feature value from " + clip.source_path);
  seg.aux = aux_descriptors(frames, spec);
  return seg;
}

NormStats fit_normalizer(const std::vector<FeatureSequence>& train) {
  require(!train.empty(), Err::InvalidArgument, "fit_normalizer: empty training set");
  const size_t d = train.front().x.cols;

  NormStats stats;
  stats.mu.assign(d, 0.0);
  stats.sigma.assign(d, 0.0);
  size_t total = 0;
  for (const FeatureSequence& seq : train) {
    require(seq.x.cols == d, Err::InvalidArgument, "fit_normalizer: mixed feature widths");
    for (size_t t = 0; t < seq.x.rows; ++t) {
      const double* r = seq.x.row(t);
      for (size_t j = 0; j < d; ++j) stats.mu[j] += r[j];
    }
    total += seq.x.rows;
  }
  require(total > 0, Err::InvalidArgument, "fit_normalizer: no frames");
  for (size_t j = 0; j < d; ++j) stats.mu[j] /= static_cast<double>(total);

  for (const FeatureSequence& seq : train) {
    for (size_t t = 0; t < seq.x.rows; ++t) {
      const double* r = seq.x.row(t);
      for (size_t j = 0; j < d; ++j) {
        const double dv = r[j] - stats.mu[j];
        stats.sigma[j] += dv * dv;
      }
    }
  }
  for (size_t j = 0; j < d; ++j) stats.sigma[j] = std::sqrt(stats.sigma[j] / static_cast<double>(total));
  return stats;
}

FeatureSequence apply_normalizer(const FeatureSequence& seq, const NormStats& stats) {
  require(seq.x.cols == stats.mu.size(), Err::InvalidArgument,
          "apply_normalizer: dimension mismatch");
  FeatureSequence out = seq;
  for (size_t t = 0; t < out.x.rows; ++t) {
    double* r = out.x.row(t);
    for (size_t j = 0; j < out.x.cols; ++j) {
      r[j] = (r[j] - stats.mu[j]) / std::max(stats.sigma[j], 1e-8);
    }
  }
  return out;
}

// ---- BMFX1 container ----

namespace {

constexpr const char* kFeatureMagic = "BMFX1\n";

std::map<std::string, std::string> parse_meta(const std::string& meta) {
  std::map<std::string, std::string> kv;
  size_t pos = 0;
  while (pos < meta.size()) {
    size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    const std::string line = meta.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, Err::ParseError, "metadata line missing '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_bmfx(const std::string& path, const Tensor2& payload,
                const std::map<std::string, std::string>& extra, const std::string& label,
                const std::string& source, const std::string& created) {
  ByteWriter w;
  w.str(kFeatureMagic);
  std::string meta;
  meta += "T=" + std::to_string(payload.rows) + "\n";
  meta += "d=" + std::to_string(payload.cols) + "\n";
  meta += "label=" + label + "\n";
  meta += "source=" + source + "\n";
  meta += "created=" + created + "\n";
  for (const auto& [k, v] : extra) meta += k + "=" + v + "\n";
  w.u32(static_cast<uint32_t>(meta.size()));
  w.str(meta);
  for (double v : payload.data) w.f32(static_cast<float>(v));
  write_file(path, w.data());
}

struct BmfxFile {
  Tensor2 payload;
  std::map<std::string, std::string> meta;
};

BmfxFile read_bmfx(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  ByteReader r(bytes, Err::TruncatedFile);
  require(r.remaining() >= 6 && r.str(6) == kFeatureMagic, Err::BadMagic,
          path + " is not a BMFX1 feature file");
  const uint32_t meta_len = r.u32();
  BmfxFile f;
  f.meta = parse_meta(r.str(meta_len));
  require(f.meta.count("T") && f.meta.count("d"), Err::ParseError, path + ": missing T/d keys");
  const size_t t_count = std::stoull(f.meta.at("T"));
  const size_t d = std::stoull(f.meta.at("d"));
  f.payload = Tensor2(t_count, d);
  require(r.remaining() >= 4 * t_count * d, Err::TruncatedFile, path + ": payload truncated");
  for (double& v : f.payload.data) v = static_cast<double>(r.f32());
  return f;
}

}  // namespace

void write_feature_file(const std::string& path, const FeatureSequence& seq,
                        const std::string& created) {
  write_bmfx(path, seq.x, {}, seq.label, seq.source, created);
}

FeatureSequence read_feature_file(const std::string& path) {
  BmfxFile f = read_bmfx(path);
  FeatureSequence seq;
  seq.x = std::move(f.payload);
  seq.label = f.meta.count("label") ? f.meta.at("label") : "";
  seq.source = f.meta.count("source") ? f.meta.at("source") : "";
  return seq;
}

void write_aux_file(const std::string& path, const Tensor2& aux, const std::string& label,
                    const std::string& source, const std::string& created) {
  write_bmfx(path, aux, {{"kind", "aux"}}, label, source, created);
}

Tensor2 read_aux_file(const std::string& path) { return read_bmfx(path).payload; }

void write_norm_stats(const std::string& path, const NormStats& stats,
                      const std::string& created) {
  Tensor2 payload(2, stats.mu.size());
  std::copy(stats.mu.begin(), stats.mu.end(), payload.row(0));
  std::copy(stats.sigma.begin(), stats.sigma.end(), payload.row(1));
  write_bmfx(path, payload, {{"tensors", "mu,sigma"}}, "", "normstats", created);
}

NormStats read_norm_stats(const std::string& path) {
  BmfxFile f = read_bmfx(path);
  require(f.payload.rows == 2, Err::ParseError, path + ": expected mu,sigma rows");
  NormStats stats;
  stats.mu.assign(f.payload.row(0), f.payload.row(0) + f.payload.cols);
  stats.sigma.assign(f.payload.row(1), f.payload.row(1) + f.payload.cols);
  return stats;
}

}  // namespace bmgc
