#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "bmgc/audio.hpp"
#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/rng.hpp"
#include "oracles.hpp"

using namespace bmgc;

namespace {

// hand-built wav container for byte-exact decoder tests
std::vector<uint8_t> make_wav(uint16_t format, uint16_t channels, uint32_t rate, uint16_t bits,
                              const std::vector<uint8_t>& payload) {
  ByteWriter w;
  w.str("RIFF");
  w.u32(36 + static_cast<uint32_t>(payload.size()));
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(format);
  w.u16(channels);
  w.u32(rate);
  w.u32(rate * channels * bits / 8);
  w.u16(static_cast<uint16_t>(channels * bits / 8));
  w.u16(bits);
  w.str("data");
  w.u32(static_cast<uint32_t>(payload.size()));
  w.bytes(payload.data(), payload.size());
  return w.take();
}

std::vector<uint8_t> pcm16_payload(const std::vector<int16_t>& samples) {
  ByteWriter w;
  for (int16_t s : samples) w.u16(static_cast<uint16_t>(s));
  return w.take();
}

AudioClip tone(double freq, double seconds, double rate, double amp = 0.5) {
  AudioClip clip;
  clip.sample_rate = rate;
  const size_t n = static_cast<size_t>(std::llround(seconds * rate));
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    clip.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate);
  }
  return clip;
}

}  // namespace

TEST_CASE("decode 16-bit mono scales by 1/32768") {
  auto bytes = make_wav(1, 1, 22050, 16, pcm16_payload({16384}));
  AudioClip clip = decode_wav(bytes);
  REQUIRE(clip.samples.size() == 1);
  CHECK(clip.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(clip.sample_rate == 22050.0);
}

TEST_CASE("decode stereo averages channels then clips") {
  auto bytes = make_wav(1, 2, 44100, 16, pcm16_payload({32767, -32768}));
  AudioClip clip = decode_wav(bytes);
  REQUIRE(clip.samples.size() == 1);
  // (32767/32768 - 1) / 2
  CHECK(clip.samples[0] == doctest::Approx(-1.52587890625e-05).epsilon(1e-9));
}

TEST_CASE("decode rejects truncated data chunk") {
  auto bytes = make_wav(1, 1, 22050, 16, pcm16_payload({0, 0, 0, 0}));
  bytes.resize(bytes.size() - 3);  // cut mid data chunk
  CHECK_THROWS_WITH_AS(decode_wav(bytes), doctest::Contains("data"), Error);
  try {
    decode_wav(bytes);
  } catch (const Error& e) {
    CHECK(e.code() == Err::MalformedContainer);
  }
}

TEST_CASE("decode error taxonomy") {
  SUBCASE("missing RIFF") {
    std::vector<uint8_t> garbage(64, 0x41);
    try {
      decode_wav(garbage);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::MalformedContainer);
    }
  }
  SUBCASE("compressed codec") {
    auto bytes = make_wav(85 /* mp3 */, 1, 22050, 16, pcm16_payload({0}));
    try {
      decode_wav(bytes);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::UnsupportedEncoding);
    }
  }
  SUBCASE("empty data chunk") {
    auto bytes = make_wav(1, 1, 22050, 16, {});
    try {
      decode_wav(bytes);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyAudio);
    }
  }
}

TEST_CASE("decode 8/24/32-bit and float payloads") {
  SUBCASE("8-bit unsigned midpoint") {
    auto bytes = make_wav(1, 1, 8000, 8, {128, 255, 0});
    AudioClip clip = decode_wav(bytes);
    CHECK(clip.samples[0] == doctest::Approx(0.0));
    CHECK(clip.samples[1] == doctest::Approx(127.0 / 128.0));
    CHECK(clip.samples[2] == doctest::Approx(-1.0));
  }
  SUBCASE("24-bit") {
    ByteWriter w;
    w.u8(0x00);
    w.u8(0x00);
    w.u8(0x40);  // 0x400000 = 2^22 -> 0.5
    auto bytes = make_wav(1, 1, 8000, 24, w.take());
    AudioClip clip = decode_wav(bytes);
    CHECK(clip.samples[0] == doctest::Approx(0.5));
  }
  SUBCASE("32-bit float passthrough") {
    ByteWriter w;
    w.f32(0.25f);
    w.f32(-2.0f);  // clipped
    auto bytes = make_wav(3, 1, 8000, 32, w.take());
    AudioClip clip = decode_wav(bytes);
    CHECK(clip.samples[0] == doctest::Approx(0.25));
    CHECK(clip.samples[1] == doctest::Approx(-1.0));
  }
}

TEST_CASE("encode/decode round-trip stays within one quantization step") {
  Rng rng(7);
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.resize(5000);
  for (double& s : clip.samples) s = rng.uniform(-1.0, 1.0);
  clip.samples[0] = 1.0;
  clip.samples[1] = -1.0;

  AudioClip back = decode_wav(encode_wav_pcm16(clip));
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32768.0 + 1e-12);
  }
}

TEST_CASE("resample identity is bit-exact") {
  AudioClip clip = tone(440.0, 0.3, 22050);
  AudioClip out = resample(clip, 22050);
  REQUIRE(out.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) CHECK(out.samples[i] == clip.samples[i]);
}

TEST_CASE("resample 44100 -> 22050 keeps the 1 kHz peak") {
  AudioClip clip = tone(1000.0, 1.0, 44100);
  AudioClip out = resample(clip, 22050);
  REQUIRE(out.samples.size() == 22050);

  // brute-force DFT oracle locates the dominant bin (1 Hz resolution)
  const std::vector<double> power = oracle::dft_power(out.samples);
  size_t peak = 0;
  for (size_t k = 1; k < power.size(); ++k) {
    if (power[k] > power[peak]) peak = k;
  }
  CHECK(peak == 1000);
}

TEST_CASE("resample preserves DC everywhere including edges") {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(4000, 0.25);
  AudioClip out = resample(clip, 16000);
  REQUIRE(out.samples.size() == 8000);
  for (double s : out.samples) CHECK(s == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("resample(resample(x, 2r), r) stays correlated for band-limited tones") {
  const double rate = 16000.0;
  for (double freq : {500.0, 1500.0, 3000.0}) {  // all below rate/4
    AudioClip clip = tone(freq, 0.5, rate);
    AudioClip up = resample(clip, 2.0 * rate);
    AudioClip back = resample(up, rate);
    REQUIRE(back.samples.size() == clip.samples.size());
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (size_t i = 0; i < clip.samples.size(); ++i) {
      xy += clip.samples[i] * back.samples[i];
      xx += clip.samples[i] * clip.samples[i];
      yy += back.samples[i] * back.samples[i];
    }
    CHECK(xy / std::sqrt(xx * yy) >= 0.99);
  }
}

TEST_CASE("segment drops short tails and pads long ones") {
  AudioClip clip;
  clip.sample_rate = 1000;

  SUBCASE("12 s clip, 5 s segments -> 2 (2 s tail dropped)") {
    clip.samples.assign(12000, 0.5);
    auto segs = segment(clip, 5.0);
    REQUIRE(segs.size() == 2);
    for (const AudioClip& s : segs) CHECK(s.samples.size() == 5000);
  }
  SUBCASE("8 s clip -> second segment zero-padded") {
    clip.samples.assign(8000, 0.5);
    auto segs = segment(clip, 5.0);
    REQUIRE(segs.size() == 2);
    CHECK(segs[1].samples.size() == 5000);
    CHECK(segs[1].samples[2999] == 0.5);
    CHECK(segs[1].samples[3000] == 0.0);
    CHECK(segs[1].samples[4999] == 0.0);
  }
  SUBCASE("2 s clip is too short") {
    clip.samples.assign(2000, 0.5);
    try {
      segment(clip, 5.0);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::ClipTooShort);
    }
  }
  SUBCASE("exactly half a segment pads") {
    clip.samples.assign(2500, 0.5);
    auto segs = segment(clip, 5.0);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].samples.size() == 5000);
  }
}

TEST_CASE("segment outputs share one length") {
  Rng rng(11);
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.resize(static_cast<size_t>(22050 * 13.2));
  for (double& s : clip.samples) s = rng.uniform(-1.0, 1.0);
  auto segs = segment(clip, 5.0);
  REQUIRE(!segs.empty());
  for (const AudioClip& s : segs) CHECK(s.samples.size() == segs.front().samples.size());
}
