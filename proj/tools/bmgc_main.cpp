// bmgc: music genre classification pipeline
//   synth | extract | train | eval | predict | compare
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmgc/audio.hpp"
#include "bmgc/baselines.hpp"
#include "bmgc/config.hpp"
#include "bmgc/dataset.hpp"
#include "bmgc/error.hpp"
#include "bmgc/eval.hpp"
#include "bmgc/features.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/nn.hpp"
#include "bmgc/parallel.hpp"
#include "bmgc/svg.hpp"
#include "bmgc/synth.hpp"
#include "bmgc/train.hpp"

namespace fs = std::filesystem;
using namespace bmgc;

namespace {

std::string now_iso() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string created_stamp(const RunConfig& cfg) { return cfg.deterministic ? "0" : now_iso(); }

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "config.resolved").string(), cfg.serialize());
}

std::string sanitize_stem(const std::string& path) {
  std::string stem = path;
  const size_t dot = stem.find_last_of('.');
  const size_t slash = stem.find_last_of("/\\");
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    stem = stem.substr(0, dot);
  }
  for (char& c : stem) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return stem;
}

RunConfig model_run_config(const std::map<std::string, std::string>& meta) {
  RunConfig cfg;
  for (const auto& [k, v] : meta) {
    if (k.rfind("config.", 0) == 0) cfg.set(k.substr(7), v);
  }
  return cfg;
}

std::map<std::string, std::string> config_meta(const RunConfig& cfg) {
  std::map<std::string, std::string> meta;
  const std::string text = cfg.serialize();
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t eol = text.find('\n', pos);
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    const size_t eq = line.find('=');
    meta["config." + line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

// ---- extract ----

int cmd_extract(const RunConfig& cfg, const std::string& manifest_path,
                const std::string& out_dir) {
  DatasetManifest manifest;
  try {
    manifest = load_manifest(manifest_path);
  } catch (const Error& e) {
    std::cerr << "extract: " << e.what() << "\n";
    return 2;
  }

  write_resolved_config(cfg, out_dir);
  const fs::path base = fs::path(manifest_path).parent_path();
  const FeatureConfig fc = cfg.feature_config();
  const MelFilterBank bank =
      build_mel_filterbank(fc.n_mels, fc.frame_len, fc.sample_rate, fc.fmin, fc.fmax);
  const std::string created = created_stamp(cfg);

  struct FileResult {
    size_t written = 0;
    std::string message;
    bool failed = false;
  };
  std::vector<FileResult> results(manifest.entries.size());

  parallel_chunks(manifest.entries.size(), cfg.deterministic ? 1 : resolve_threads(cfg.threads),
                  [&](size_t begin, size_t end, size_t) {
    for (size_t i = begin; i < end; ++i) {
      const ManifestEntry& entry = manifest.entries[i];
      FileResult& res = results[i];
      try {
        const fs::path audio_path = fs::path(entry.path).is_absolute()
                                        ? fs::path(entry.path)
                                        : base / entry.path;
        AudioClip clip = decode_wav_file(audio_path.string());
        clip.source_path = entry.path;
        clip = resample(clip, fc.sample_rate);
        std::vector<AudioClip> segments = segment(clip, fc.seg_seconds);
        const std::string stem = sanitize_stem(entry.path);
        char suffix[32];
        for (size_t s = 0; s < segments.size(); ++s) {
          ExtractedSegment seg = extract_segment(segments[s], fc, bank);
          seg.features.label = entry.genre;
          std::snprintf(suffix, sizeof(suffix), "_seg%03zu", s);
          const std::string out_base = (fs::path(out_dir) / (stem + suffix)).string();
          write_feature_file(out_base + ".bmfx", seg.features, created);
          write_aux_file(out_base + ".aux.bmfx", seg.aux, entry.genre, seg.features.source,
                         created);
          ++res.written;
        }
        res.message = entry.path + ": " + std::to_string(segments.size()) + " segments";
      } catch (const std::exception& e) {
        res.failed = true;
        res.message = entry.path + ": skipped (" + e.what() + ")";
      }
    }
  });

  size_t ok_files = 0, total_segments = 0, skipped = 0;
  for (const FileResult& res : results) {
    std::cout << res.message << "\n";
    if (res.failed) {
      ++skipped;
    } else {
      ++ok_files;
      total_segments += res.written;
    }
  }
  std::cout << "extracted " << total_segments << " segment(s) from " << ok_files << " file(s), "
            << skipped << " skipped\n";
  return ok_files > 0 ? 0 : 1;
}

// ---- train ----

int cmd_train(const RunConfig& cfg, const std::string& features_dir, const std::string& out_dir) {
  LoadedFeatures feats = load_features_dir(features_dir);
  SplitAssignment split = stratified_split(feats.recordings, cfg.seed, cfg.fractions);
  SegmentSplit seg_split = segment_split(feats.data, feats.recordings, split);

  write_resolved_config(cfg, out_dir);
  write_split_csv((fs::path(out_dir) / "split.csv").string(), feats.recordings, split);

  const std::string history_path = (fs::path(out_dir) / "history.csv").string();
  TrainResult result =
      train(feats.data, seg_split, cfg.train_config(),
            [&](const std::vector<EpochRecord>& h) {  // flush partial history per epoch
              write_text_file(history_path, history_csv(h));
            });
  write_text_file(history_path, history_csv(result.history));
  write_text_file((fs::path(out_dir) / "curves.svg").string(), curves_svg(result.history));
  save_model((fs::path(out_dir) / "model.bmgc").string(), result.params, result.stats,
             config_meta(cfg));
  write_norm_stats((fs::path(out_dir) / "norm_stats.bmfx").string(), result.stats,
                   created_stamp(cfg));

  const EpochRecord& last = result.history.back();
  std::cout << "trained " << result.history.size() << " epoch(s); best epoch "
            << result.best_epoch << "; final val_acc " << last.val_acc << "\n";
  std::cout << "model: " << (fs::path(out_dir) / "model.bmgc").string() << "\n";
  return 0;
}

// ---- eval ----

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::string& features_dir,
             const std::string& split_path, const std::string& part_name,
             const std::string& out_dir) {
  LoadedModel model = load_model(model_path);
  LoadedFeatures feats = load_features_dir(features_dir, model.params.genres);

  SplitPart part = SplitPart::Test;
  if (part_name == "train") part = SplitPart::Train;
  else if (part_name == "val") part = SplitPart::Val;
  else require(part_name == "test", Err::InvalidArgument, "part must be train|val|test");

  std::map<std::string, SplitPart> by_source;
  for (const SplitRow& row : read_split_csv(split_path)) by_source[row.path] = row.part;

  std::vector<FeatureSequence> segments;
  std::vector<int> labels;
  for (size_t i = 0; i < feats.data.segments.size(); ++i) {
    auto it = by_source.find(feats.data.sources[i]);
    require(it != by_source.end(), Err::ParseError,
            "source '" + feats.data.sources[i] + "' missing from " + split_path);
    if (it->second != part) continue;
    segments.push_back(feats.data.segments[i]);
    labels.push_back(feats.data.labels[i]);
  }
  require(!segments.empty(), Err::InvalidArgument,
          "split part '" + part_name + "' holds no segments");

  EvalReport report = evaluate(model.params, model.stats, segments, labels,
                               cfg.deterministic ? 1 : resolve_threads(cfg.threads));

  write_resolved_config(cfg, out_dir);
  write_text_file((fs::path(out_dir) / "report.csv").string(), report_csv(report));
  write_text_file((fs::path(out_dir) / "confusion.csv").string(), confusion_csv(report));
  write_text_file((fs::path(out_dir) / "confusion.svg").string(), heatmap_svg(report));
  std::cout << format_report_table(report);
  return 0;
}

// ---- predict ----

int cmd_predict(const std::string& model_path, const std::string& audio_path, bool as_json,
                const std::string& out_dir) {
  LoadedModel model = load_model(model_path);
  const RunConfig model_cfg = model_run_config(model.meta);
  AudioClip clip = decode_wav_file(audio_path);
  ClipPrediction pred =
      predict_clip(model.params, model.stats, clip, model_cfg.feature_config());

  if (!out_dir.empty()) write_resolved_config(model_cfg, out_dir);

  if (as_json) {
    nlohmann::json j;
    j["audio"] = audio_path;
    j["label"] = model.params.genres[static_cast<size_t>(pred.label)];
    j["label_index"] = pred.label;
    j["segments"] = nlohmann::json::array();
    for (const std::vector<double>& probs : pred.segment_probs) {
      nlohmann::json seg;
      for (size_t g = 0; g < probs.size(); ++g) seg[model.params.genres[g]] = probs[g];
      j["segments"].push_back(seg);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  for (size_t s = 0; s < pred.segment_probs.size(); ++s) {
    const std::vector<double>& probs = pred.segment_probs[s];
    std::vector<size_t> order(probs.size());
    for (size_t g = 0; g < order.size(); ++g) order[g] = g;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (probs[a] != probs[b]) return probs[a] > probs[b];
      return a < b;
    });
    std::cout << "segment " << s << ":";
    for (size_t g : order) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " %s=%.3f", model.params.genres[g].c_str(), probs[g]);
      std::cout << buf;
    }
    std::cout << "\n";
  }
  std::cout << "label: " << model.params.genres[static_cast<size_t>(pred.label)] << "\n";
  return 0;
}

// ---- compare ----

int cmd_compare(const RunConfig& cfg, const std::string& features_dir,
                const std::string& out_dir) {
  LoadedFeatures feats = load_features_dir(features_dir);
  SplitAssignment split = stratified_split(feats.recordings, cfg.seed, cfg.fractions);
  SegmentSplit seg_split = segment_split(feats.data, feats.recordings, split);
  const uint64_t hash = split_hash(feats.recordings, split);

  CompareConfig cc;
  cc.nn = cfg.train_config();
  cc.knn_k = cfg.knn_k;
  cc.logreg_epochs = cfg.logreg_epochs;
  cc.logreg_lr = cfg.logreg_lr;

  std::vector<CompareRow> rows = compare(feats.data, feats.aux, seg_split, hash, cc);

  write_resolved_config(cfg, out_dir);
  write_text_file((fs::path(out_dir) / "compare.csv").string(), compare_csv(rows));
  const std::string table = compare_table(rows);
  write_text_file((fs::path(out_dir) / "compare.txt").string(), table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music genre classification toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, features_dir, model_path, split_path,
      audio_path;
  std::string part = "test", mode;
  uint64_t seed = 0;
  size_t per_class = 0, epochs = 0, batch = 0;
  int threads = -1;
  bool deterministic = false, as_json = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--threads", threads, "worker threads (0 = auto)");
    cmd->add_flag("--deterministic", deterministic,
                  "single-threaded bit-reproducible mode with zeroed timestamps");
  };

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic WAV corpus");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--per-class", per_class, "clips per class (>= 5)");
  add_common(synth);

  CLI::App* extract = app.add_subcommand("extract", "extract feature files from a manifest");
  extract->add_option("--manifest", manifest_path, "manifest csv")->required();
  extract->add_option("--out", out_dir, "output directory")->required();
  add_common(extract);

  CLI::App* train_cmd = app.add_subcommand("train", "train the recurrent classifier");
  train_cmd->add_option("--features", features_dir, "extracted features directory")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--epochs", epochs, "max training epochs");
  train_cmd->add_option("--batch", batch, "batch size");
  train_cmd->add_option("--mode", mode, "head mode: sequence | frame");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained model on a split");
  eval_cmd->add_option("--model", model_path, "model file")->required();
  eval_cmd->add_option("--features", features_dir, "extracted features directory")->required();
  eval_cmd->add_option("--split", split_path, "split.csv from training")->required();
  eval_cmd->add_option("--part", part, "train | val | test (default test)");
  eval_cmd->add_option("--out", out_dir, "output directory")->required();
  add_common(eval_cmd);

  CLI::App* predict = app.add_subcommand("predict", "classify one audio file");
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("--audio", audio_path, "wav file")->required();
  predict->add_flag("--json", as_json, "structured output");
  predict->add_option("--out", out_dir, "optional output directory");
  add_common(predict);

  CLI::App* compare_cmd = app.add_subcommand("compare", "comparative study of all models");
  compare_cmd->add_option("--features", features_dir, "extracted features directory")->required();
  compare_cmd->add_option("--out", out_dir, "output directory")->required();
  compare_cmd->add_option("--epochs", epochs, "max training epochs");
  compare_cmd->add_option("--batch", batch, "batch size");
  add_common(compare_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    CLI::App* active = app.get_subcommands().front();
    auto passed = [&](const char* name) {
      const CLI::Option* opt = active->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    if (passed("--seed")) cfg.seed = seed;
    if (passed("--threads")) cfg.threads = threads;
    if (passed("--deterministic")) cfg.deterministic = true;
    if (passed("--per-class")) cfg.per_class = per_class;
    if (passed("--epochs")) cfg.max_epochs = epochs;
    if (passed("--batch")) cfg.batch = batch;
    if (passed("--mode")) cfg.set("mode", mode);

    if (active == synth) {
      write_resolved_config(cfg, out_dir);
      const std::string manifest = generate_synthetic(out_dir, cfg.seed, cfg.per_class);
      std::cout << "wrote " << cfg.per_class * 10 << " clips; manifest: " << manifest << "\n";
      return 0;
    }
    if (active == extract) return cmd_extract(cfg, manifest_path, out_dir);
    if (active == train_cmd) return cmd_train(cfg, features_dir, out_dir);
    if (active == eval_cmd) {
      return cmd_eval(cfg, model_path, features_dir, split_path, part, out_dir);
    }
    if (active == predict) return cmd_predict(model_path, audio_path, as_json, out_dir);
    if (active == compare_cmd) return cmd_compare(cfg, features_dir, out_dir);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
