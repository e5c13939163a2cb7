#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bmgc {

// Decoded mono waveform. Samples are dimensionless in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 0.0;
  std::string source_path;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Decode a RIFF/WAVE byte stream: PCM 8/16/24/32-bit integer or 32-bit IEEE
// float, 1 or 2 channels. Stereo is averaged to mono, then clipped to [-1, 1].
AudioClip decode_wav(const std::vector<uint8_t>& bytes, const std::string& source_path = "");
AudioClip decode_wav_file(const std::string& path);

// Encode as 16-bit PCM mono WAV.
std::vector<uint8_t> encode_wav_pcm16(const AudioClip& clip);
void write_wav_file(const std::string& path, const AudioClip& clip);

// Windowed-sinc resampler (Hann-windowed, 32 taps per side). Pass-through is
// bit-exact when the rates already match.
AudioClip resample(const AudioClip& clip, double target_rate);

// Cut into consecutive non-overlapping segments of seg_seconds. A final
// remainder shorter than half a segment is dropped, otherwise zero-padded.
std::vector<AudioClip> segment(const AudioClip& clip, double seg_seconds);

}  // namespace bmgc
