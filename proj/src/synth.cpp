#include "bmgc/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bmgc/dataset.hpp"
#include "bmgc/dsp.hpp"
#include "bmgc/error.hpp"
#include "bmgc/rng.hpp"

namespace fs = std::filesystem;

namespace bmgc {

namespace {

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

AudioClip synth_clip(int class_index, uint64_t clip_seed, double seconds, double sample_rate) {
  require(class_index >= 0 && class_index < 10, Err::InvalidArgument, "class index out of range");
  const size_t n = static_cast<size_t>(std::llround(seconds * sample_rate));
  Rng rng(clip_seed);

  const double carrier_hz = 220.0 * std::pow(2.0, static_cast<double>(class_index) / 3.0);
  const double am_hz = 1.0 + 0.7 * static_cast<double>(class_index);
  const double tilt_db_per_octave = -static_cast<double>(class_index);
  const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
  const double phase1 = rng.uniform(0.0, 2.0 * M_PI);

  std::vector<double> tone(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double am = 1.0 + 0.9 * std::sin(2.0 * M_PI * am_hz * t + phase1);
    tone[i] = am * std::sin(2.0 * M_PI * carrier_hz * t + phase0);
  }

  // tilted noise: shape white noise in the frequency domain
  const size_t m = next_pow2(n);
  std::vector<double> re(m), im(m, 0.0);
  for (size_t i = 0; i < m; ++i) re[i] = rng.gaussian();
  fft(re, im);
  const double bin_hz = sample_rate / static_cast<double>(m);
  for (size_t k = 0; k < m; ++k) {
    const size_t kk = k <= m / 2 ? k : m - k;  // conjugate-symmetric gain
    const double f = std::max(20.0, bin_hz * static_cast<double>(kk));
    const double gain = std::pow(10.0, tilt_db_per_octave * std::log2(f / 220.0) / 20.0);
    re[k] *= gain;
    im[k] *= gain;
  }
  fft(re, im, true);
  std::vector<double> noise(re.begin(), re.begin() + static_cast<long>(n));

  const double snr_db = 10.0;
  const double noise_scale = rms(tone) / (rms(noise) * std::pow(10.0, snr_db / 20.0));

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  double peak = 0.0;
  for (size_t i = 0; i < n; ++i) {
    clip.samples[i] = tone[i] + noise_scale * noise[i];
    peak = std::max(peak, std::abs(clip.samples[i]));
  }
  const double scale = peak > 0.0 ? 0.9 / peak : 1.0;
  for (double& s : clip.samples) s *= scale;
  return clip;
}

std::string generate_synthetic(const std::string& out_dir, uint64_t seed, size_t per_class) {
  require(per_class >= 5, Err::InvalidArgument, "per_class must be >= 5");
  const std::vector<std::string>& genres = default_genres();
  fs::create_directories(fs::path(out_dir) / "wav");

  DatasetManifest manifest;
  manifest.label_set = genres;
  char name[128];
  for (int c = 0; c < 10; ++c) {
    for (size_t i = 0; i < per_class; ++i) {
      std::snprintf(name, sizeof(name), "wav/%s_%03zu.wav", genres[static_cast<size_t>(c)].c_str(),
                    i);
      AudioClip clip =
          synth_clip(c, mix_seed(seed, static_cast<uint64_t>(c) * 4096 + i));
      clip.source_path = name;
      write_wav_file((fs::path(out_dir) / name).string(), clip);
      manifest.entries.push_back({name, genres[static_cast<size_t>(c)]});
    }
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace bmgc
