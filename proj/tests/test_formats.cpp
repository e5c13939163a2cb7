#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bmgc/config.hpp"
#include "bmgc/error.hpp"
#include "bmgc/features.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/nn.hpp"
#include "bmgc/rng.hpp"
#include "bmgc/synth.hpp"
#include "nn_helpers.hpp"

namespace fs = std::filesystem;
using namespace bmgc;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("feature file round trip") {
  TempDir dir("bmgc_fmt_feature");
  Rng rng(2);
  FeatureSequence seq;
  seq.x = Tensor2(9, 4);
  for (double& v : seq.x.data) v = rng.gaussian();
  seq.label = "folk";
  seq.source = "some/clip.wav";

  const std::string path = dir.file("seg.bmfx");
  write_feature_file(path, seq, "0");
  FeatureSequence back = read_feature_file(path);
  CHECK(back.label == "folk");
  CHECK(back.source == "some/clip.wav");
  REQUIRE(back.x.rows == 9);
  REQUIRE(back.x.cols == 4);
  for (size_t i = 0; i < seq.x.data.size(); ++i) {
    // float32 payload: values round-trip exactly at f32 precision
    CHECK(back.x.data[i] == static_cast<double>(static_cast<float>(seq.x.data[i])));
  }

  SUBCASE("bad magic") {
    std::vector<uint8_t> bytes = read_file(path);
    bytes[0] = 'X';
    write_file(path, bytes);
    try {
      read_feature_file(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::BadMagic);
    }
  }
  SUBCASE("truncated payload") {
    std::vector<uint8_t> bytes = read_file(path);
    bytes.resize(bytes.size() - 7);
    write_file(path, bytes);
    try {
      read_feature_file(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::TruncatedFile);
    }
  }
}

TEST_CASE("norm stats container stores mu and sigma rows") {
  TempDir dir("bmgc_fmt_norm");
  NormStats stats;
  stats.mu = {1.0, 2.0, 3.0};
  stats.sigma = {0.5, 0.25, 4.0};
  const std::string path = dir.file("norm.bmfx");
  write_norm_stats(path, stats, "0");
  NormStats back = read_norm_stats(path);
  REQUIRE(back.mu.size() == 3);
  for (size_t j = 0; j < 3; ++j) {
    CHECK(back.mu[j] == doctest::Approx(stats.mu[j]));
    CHECK(back.sigma[j] == doctest::Approx(stats.sigma[j]));
  }
}

TEST_CASE("model container round trip and validation") {
  TempDir dir("bmgc_fmt_model");
  testutil::TinySetup setup = testutil::tiny_setup(77, HeadMode::Sequence);
  NormStats stats;
  stats.mu.assign(6, 0.25);
  stats.sigma.assign(6, 2.0);
  const std::string path = dir.file("model.bmgc");
  save_model(path, setup.params, stats, {{"note", "fixture"}});

  SUBCASE("loaded tensors equal the f32 cast of the saved values; re-save is byte-identical") {
    LoadedModel loaded = load_model(path);
    CHECK(loaded.meta.at("note") == "fixture");
    CHECK(loaded.params.hyper.hidden == 5);
    CHECK(loaded.params.genres == setup.params.genres);

    std::vector<TensorRef> orig = param_tensors(setup.params);
    std::vector<TensorRef> back = param_tensors(loaded.params);
    REQUIRE(orig.size() == back.size());
    for (size_t i = 0; i < orig.size(); ++i) {
      for (size_t k = 0; k < orig[i].size; ++k) {
        CHECK(back[i].data[k] == static_cast<double>(static_cast<float>(orig[i].data[k])));
      }
    }

    const std::string path2 = dir.file("model2.bmgc");
    save_model(path2, loaded.params, loaded.stats, {{"note", "fixture"}});
    CHECK(read_file(path) == read_file(path2));
  }
  SUBCASE("corrupt magic") {
    std::vector<uint8_t> bytes = read_file(path);
    for (int i = 0; i < 6; ++i) bytes[static_cast<size_t>(i)] = 0xFF;
    write_file(path, bytes);
    try {
      load_model(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::BadMagic);
    }
  }
  SUBCASE("version mismatch") {
    std::vector<uint8_t> bytes = read_file(path);
    bytes[6] = 99;  // version lives right after the magic
    write_file(path, bytes);
    try {
      load_model(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::VersionMismatch);
    }
  }
  SUBCASE("file truncated after the header") {
    std::vector<uint8_t> bytes = read_file(path);
    bytes.resize(bytes.size() / 2);
    write_file(path, bytes);
    try {
      load_model(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      const bool truncated_or_broken =
          e.code() == Err::TruncatedFile || e.code() == Err::ShapeChainBroken;
      CHECK(truncated_or_broken);
    }
  }
  SUBCASE("shape chain breaks when hyperparameters disagree with tensors") {
    std::vector<uint8_t> bytes = read_file(path);
    // hidden=5 -> hidden=6 in the metadata block leaves every tensor mis-shaped
    std::string blob(bytes.begin(), bytes.end());
    const size_t at = blob.find("hidden=5");
    REQUIRE(at != std::string::npos);
    blob[at + 7] = '6';
    write_file(path, std::vector<uint8_t>(blob.begin(), blob.end()));
    try {
      load_model(path);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::ShapeChainBroken);
    }
  }
}

TEST_CASE("run config round trip and validation") {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.hidden = 32;
  cfg.mode = "frame";
  const std::string text = cfg.serialize();
  CHECK(text.find("hidden=32\n") != std::string::npos);
  CHECK(text.find("mode=frame\n") != std::string::npos);

  TempDir dir("bmgc_fmt_cfg");
  write_text_file(dir.file("cfg"), "hidden=16\n# comment\nlr=0.01\n");
  RunConfig parsed = parse_config_file(dir.file("cfg"));
  CHECK(parsed.hidden == 16);
  CHECK(parsed.lr == doctest::Approx(0.01));

  write_text_file(dir.file("bad"), "no_such_key=1\n");
  CHECK_THROWS_AS(parse_config_file(dir.file("bad")), Error);
  write_text_file(dir.file("badmode"), "mode=banana\n");
  CHECK_THROWS_AS(parse_config_file(dir.file("badmode")), Error);
}

TEST_CASE("synthetic clips are seed-deterministic and class-distinct") {
  AudioClip a = synth_clip(3, 123, 1.0);
  AudioClip b = synth_clip(3, 123, 1.0);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);

  AudioClip c = synth_clip(7, 123, 1.0);
  double diff = 0.0;
  for (size_t i = 0; i < a.samples.size(); ++i) diff += std::abs(a.samples[i] - c.samples[i]);
  CHECK(diff > 1.0);

  for (double s : a.samples) {
    CHECK(s <= 0.9 + 1e-12);
    CHECK(s >= -0.9 - 1e-12);
  }
}
