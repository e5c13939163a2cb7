#include "bmgc/audio.hpp"

#include <algorithm>
#include <cmath>

#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"

namespace bmgc {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatIeeeFloat = 3;

double clip1(double v) { return std::min(1.0, std::max(-1.0, v)); }

double decode_sample(ByteReader& r, uint16_t format, uint16_t bits) {
  switch (bits) {
    case 8:  // 8-bit PCM is unsigned with a 128 offset
      return (static_cast<double>(r.u8()) - 128.0) / 128.0;
    case 16:
      return static_cast<double>(static_cast<int16_t>(r.u16())) / 32768.0;
    case 24: {
      uint32_t raw = r.u8();
      raw |= static_cast<uint32_t>(r.u8()) << 8;
      raw |= static_cast<uint32_t>(r.u8()) << 16;
      int32_t v = static_cast<int32_t>(raw << 8) >> 8;  // sign extend
      return static_cast<double>(v) / 8388608.0;
    }
    case 32:
      if (format == kFormatIeeeFloat) return static_cast<double>(r.f32());
      return static_cast<double>(static_cast<int32_t>(r.u32())) / 2147483648.0;
    default:
      fail(Err::UnsupportedEncoding, "unsupported bit depth " + std::to_string(bits));
  }
}

}  // namespace

AudioClip decode_wav(const std::vector<uint8_t>& bytes, const std::string& source_path) {
  ByteReader r(bytes, Err::MalformedContainer);
  require(r.remaining() >= 12, Err::MalformedContainer, "file too small for RIFF header");
  require(r.str(4) == "RIFF", Err::MalformedContainer, "missing RIFF tag");
  r.u32();  // declared riff size; data chunk bounds are validated directly
  require(r.str(4) == "WAVE", Err::MalformedContainer, "missing WAVE tag");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_pos = 0, data_size = 0;
  bool have_data = false;

  while (r.remaining() >= 8) {
    std::string id = r.str(4);
    uint32_t size = r.u32();
    require(size <= r.remaining(), Err::MalformedContainer,
            id == "data" ? "file truncated mid data chunk" : "chunk '" + id + "' truncated");
    size_t next = r.pos() + size;
    if ((size & 1) && next < bytes.size()) ++next;  // odd-sized chunks carry a pad byte
    if (id == "fmt ") {
      require(size >= 16, Err::MalformedContainer, "fmt chunk too small");
      format = r.u16();
      channels = r.u16();
      sample_rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      have_fmt = true;
    } else if (id == "data") {
      data_pos = r.pos();
      data_size = size;
      have_data = true;
    }
    r.seek(next);
  }

  require(have_fmt, Err::MalformedContainer, "missing fmt chunk");
  require(have_data, Err::MalformedContainer, "missing data chunk");
  require(format == kFormatPcm || format == kFormatIeeeFloat, Err::UnsupportedEncoding,
          "compressed or extensible codec (format tag " + std::to_string(format) + ")");
  if (format == kFormatIeeeFloat) {
    require(bits == 32, Err::UnsupportedEncoding, "IEEE float must be 32-bit");
  }
  require(channels == 1 || channels == 2, Err::UnsupportedEncoding,
          std::to_string(channels) + " channels");
  require(sample_rate > 0, Err::MalformedContainer, "zero sample rate");
  require(data_size > 0, Err::EmptyAudio, "zero-length data chunk");

  const size_t bytes_per_sample = bits / 8;
  require(bytes_per_sample > 0 && bits % 8 == 0, Err::UnsupportedEncoding,
          "bit depth " + std::to_string(bits));
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n_frames = data_size / frame_bytes;
  require(n_frames > 0, Err::EmptyAudio, "data chunk holds no complete frame");

  AudioClip clip;
  clip.sample_rate = static_cast<double>(sample_rate);
  clip.source_path = source_path;
  clip.samples.resize(n_frames);

  ByteReader dr(bytes.data() + data_pos, n_frames * frame_bytes, Err::MalformedContainer);
  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) acc += decode_sample(dr, format, bits);
    clip.samples[i] = clip1(acc / channels);
  }
  return clip;
}

AudioClip decode_wav_file(const std::string& path) { return decode_wav(read_file(path), path); }

std::vector<uint8_t> encode_wav_pcm16(const AudioClip& clip) {
  require(clip.sample_rate > 0, Err::InvalidArgument, "encode: sample_rate must be positive");
  const uint32_t rate = static_cast<uint32_t>(std::llround(clip.sample_rate));
  const uint32_t data_size = static_cast<uint32_t>(clip.samples.size() * 2);

  ByteWriter w;
  w.str("RIFF");
  w.u32(36 + data_size);
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(kFormatPcm);
  w.u16(1);  // mono
  w.u32(rate);
  w.u32(rate * 2);
  w.u16(2);
  w.u16(16);
  w.str("data");
  w.u32(data_size);
  for (double s : clip.samples) {
    double q = std::round(clip1(s) * 32768.0);
    q = std::min(32767.0, std::max(-32768.0, q));
    w.u16(static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  return w.take();
}

void write_wav_file(const std::string& path, const AudioClip& clip) {
  write_file(path, encode_wav_pcm16(clip));
}

AudioClip resample(const AudioClip& clip, double target_rate) {
  require(target_rate > 0, Err::InvalidArgument, "resample: target_rate must be positive");
  if (target_rate == clip.sample_rate) return clip;  // bit-exact pass-through

  const double ratio = target_rate / clip.sample_rate;
  const size_t in_len = clip.samples.size();
  const size_t out_len = static_cast<size_t>(std::llround(static_cast<double>(in_len) * ratio));
  // cutoff relative to source Nyquist; lowpass only when decimating
  const double fc = std::min(1.0, ratio);
  const int taps = 32;

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_path = clip.source_path;
  out.samples.resize(out_len);

  const double* x = clip.samples.data();
  for (size_t j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) / ratio;
    const long k_lo = std::max(0L, static_cast<long>(std::ceil(t - taps)));
    const long k_hi = std::min(static_cast<long>(in_len) - 1, static_cast<long>(std::floor(t + taps)));
    double acc = 0.0, wsum = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) {
      const double u = t - static_cast<double>(k);
      const double su = fc * u;
      const double sinc = su == 0.0 ? 1.0 : std::sin(M_PI * su) / (M_PI * su);
      const double win = 0.5 + 0.5 * std::cos(M_PI * u / taps);
      const double w = sinc * win;
      acc += x[k] * w;
      wsum += w;
    }
    out.samples[j] = wsum != 0.0 ? acc / wsum : 0.0;
  }
  return out;
}

std::vector<AudioClip> segment(const AudioClip& clip, double seg_seconds) {
  require(seg_seconds > 0, Err::InvalidArgument, "segment: seg_seconds must be positive");
  const size_t seg_len = static_cast<size_t>(std::llround(seg_seconds * clip.sample_rate));
  require(seg_len > 0, Err::InvalidArgument, "segment: empty segment length");
  const size_t n = clip.samples.size();
  require(2 * n >= seg_len, Err::ClipTooShort,
          clip.source_path + ": clip shorter than half a segment");

  std::vector<AudioClip> out;
  for (size_t start = 0; start < n; start += seg_len) {
    const size_t avail = n - start;
    if (avail < seg_len && 2 * avail < seg_len) break;  // drop short tail
    AudioClip seg;
    seg.sample_rate = clip.sample_rate;
    seg.source_path = clip.source_path;
    seg.samples.assign(seg_len, 0.0);
    std::copy_n(clip.samples.begin() + static_cast<long>(start), std::min(avail, seg_len),
                seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace bmgc
