#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace bmgc {

// The ten default genre labels, in class-index order.
const std::vector<std::string>& default_genres();

struct ManifestEntry {
  std::string path;
  std::string genre;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> label_set;

  int genre_index(const std::string& genre) const;
};

// CSV with header `path,genre`; paths containing commas are rejected.
DatasetManifest load_manifest(const std::string& path,
                              const std::vector<std::string>& label_set = default_genres());
DatasetManifest parse_manifest(const std::string& text, const std::string& origin,
                               const std::vector<std::string>& label_set = default_genres());
void write_manifest(const std::string& path, const DatasetManifest& manifest);

enum class SplitPart { Train, Val, Test };
const char* split_part_name(SplitPart p);

// Recording-level split; indices refer to manifest entries.
struct SplitAssignment {
  std::vector<size_t> train, val, test;
  uint64_t seed = 0;
  std::array<double, 3> fractions{0.70, 0.15, 0.15};
};

// Shuffles recordings per genre with the seeded generator and partitions by
// the largest-remainder rule, so same-source segments never straddle splits.
SplitAssignment stratified_split(const DatasetManifest& manifest, uint64_t seed,
                                 std::array<double, 3> fractions = {0.70, 0.15, 0.15});

// split.csv: header `path,genre,split`, one row per recording.
void write_split_csv(const std::string& path, const DatasetManifest& manifest,
                     const SplitAssignment& split);
struct SplitRow {
  std::string path;
  std::string genre;
  SplitPart part;
};
std::vector<SplitRow> read_split_csv(const std::string& path);

// FNV-1a over the sorted `path\tpart` rows; identifies a split assignment.
uint64_t split_hash(const DatasetManifest& manifest, const SplitAssignment& split);

}  // namespace bmgc
