#pragma once

#include <string>
#include <vector>

#include "bmgc/audio.hpp"
#include "bmgc/tensor.hpp"

namespace bmgc {

// Windowed-sample matrix: row t holds samples [t*hop, t*hop + frame_len).
struct FrameMatrix {
  Tensor2 frames;
  size_t frame_len = 0;
  size_t hop = 0;
  double sample_rate = 0.0;
};

// Triangular mel filters over one-sided FFT bins; peak weight 1, no area
// normalization.
struct MelFilterBank {
  Tensor2 weights;  // n_mels x (n_fft/2 + 1)
  double fmin = 0.0;
  double fmax = 0.0;
  double sample_rate = 0.0;
  size_t n_fft = 0;
};

// Per-frame feature sequence, columns [13 MFCC | 13 dMFCC | 12 chroma].
struct FeatureSequence {
  Tensor2 x;           // T x d
  std::string label;   // empty when absent
  std::string source;  // provenance (original audio path)
};

struct NormStats {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct FeatureConfig {
  double sample_rate = 22050.0;
  double seg_seconds = 5.0;
  size_t frame_len = 2048;
  size_t hop = 512;
  size_t n_mels = 40;
  size_t n_mfcc = 13;
  size_t delta_width = 4;
  double fmin = 0.0;
  double fmax = 11025.0;
};

inline constexpr double kLogFloor = 1e-10;

double hz_to_mel(double f);
double mel_to_hz(double m);

FrameMatrix frame_signal(const AudioClip& clip, size_t frame_len, size_t hop);

// Hann-windowed one-sided power spectrogram, T x (n_fft/2 + 1).
Tensor2 stft_power(const FrameMatrix& frames);

MelFilterBank build_mel_filterbank(size_t n_mels, size_t n_fft, double sample_rate, double fmin,
                                   double fmax);

// Orthonormal DCT-II of one row, coefficients 0..n_out-1.
std::vector<double> dct2_orthonormal(const std::vector<double>& row, size_t n_out);

Tensor2 mfcc(const Tensor2& spec, const MelFilterBank& bank, size_t n_mfcc);

// Regression delta with replicated edges, half-width W:
// d_t = sum_n n*(x_{t+n} - x_{t-n}) / (2 * sum_n n^2).
Tensor2 delta(const Tensor2& feat, size_t half_width);

// 12 pitch classes, class 0 = C, A4 = 440 Hz; each frame scaled to max 1.
Tensor2 chroma(const Tensor2& spec, double sample_rate);

// Columns: ZCR, spectral centroid, roll-off (0.85), bandwidth, RMS.
Tensor2 aux_descriptors(const FrameMatrix& frames, const Tensor2& spec);

FeatureSequence assemble(const AudioClip& clip, const FeatureConfig& cfg, const MelFilterBank& bank);

// assemble plus the five auxiliary descriptors from the same frames.
struct ExtractedSegment {
  FeatureSequence features;
  Tensor2 aux;  // T x 5
};
ExtractedSegment extract_segment(const AudioClip& clip, const FeatureConfig& cfg,
                                 const MelFilterBank& bank);

NormStats fit_normalizer(const std::vector<FeatureSequence>& train);
FeatureSequence apply_normalizer(const FeatureSequence& seq, const NormStats& stats);

// BMFX1 container: magic, length-prefixed key=value metadata, then row-major
// little-endian float32 payload.
void write_feature_file(const std::string& path, const FeatureSequence& seq,
                        const std::string& created);
FeatureSequence read_feature_file(const std::string& path);

void write_aux_file(const std::string& path, const Tensor2& aux, const std::string& label,
                    const std::string& source, const std::string& created);
Tensor2 read_aux_file(const std::string& path);

void write_norm_stats(const std::string& path, const NormStats& stats, const std::string& created);
NormStats read_norm_stats(const std::string& path);

}  // namespace bmgc
