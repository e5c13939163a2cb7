#pragma once

#include <cstdint>
#include <string>

#include "bmgc/audio.hpp"

namespace bmgc {

// Ten synthetic classes with distinct spectral envelopes and temporal
// modulation: class c uses carrier 220*2^(c/3) Hz, AM rate 1+0.7c Hz, and
// additive noise tilted by -c dB/octave at 10 dB SNR.
AudioClip synth_clip(int class_index, uint64_t clip_seed, double seconds = 15.0,
                     double sample_rate = 22050.0);

// Writes per_class clips per class under out_dir/wav plus manifest.csv;
// returns the manifest path. Byte-identical for a fixed seed.
std::string generate_synthetic(const std::string& out_dir, uint64_t seed, size_t per_class);

}  // namespace bmgc
