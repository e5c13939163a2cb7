#include "bmgc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"
#include "bmgc/rng.hpp"

namespace bmgc {

const std::vector<std::string>& default_genres() {
  static const std::vector<std::string> genres = {
      "bangla_hiphop",  "bangla_metal", "bangla_rock",    "deshattobodhok", "palligiti",
      "lalon_giti",     "nazrul_sangeet", "rabindra_sangeet", "folk",       "hamdnaat"};
  return genres;
}

int DatasetManifest::genre_index(const std::string& genre) const {
  for (size_t i = 0; i < label_set.size(); ++i) {
    if (label_set[i] == genre) return static_cast<int>(i);
  }
  return -1;
}

DatasetManifest parse_manifest(const std::string& text, const std::string& origin,
                               const std::vector<std::string>& label_set) {
  DatasetManifest m;
  m.label_set = label_set;
  {
    std::set<std::string> uniq(label_set.begin(), label_set.end());
    require(uniq.size() == label_set.size(), Err::InvalidArgument,
            "label set contains duplicates");
  }

  std::set<std::string> seen_paths;
  size_t line_no = 0;
  size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    const bool last = eol == std::string::npos;
    std::string line = text.substr(pos, last ? std::string::npos : eol - pos);
    pos = last ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (last) break;
      continue;
    }

    if (!have_header) {
      require(line == "path,genre", Err::ParseError,
              origin + ":" + std::to_string(line_no) + ": expected header 'path,genre'");
      have_header = true;
      continue;
    }

    const size_t comma = line.find(',');
    require(comma != std::string::npos, Err::ParseError,
            origin + ":" + std::to_string(line_no) + ": expected 'path,genre'");
    const std::string path = line.substr(0, comma);
    const std::string genre = line.substr(comma + 1);
    require(!path.empty() && !genre.empty(), Err::ParseError,
            origin + ":" + std::to_string(line_no) + ": empty field");
    require(genre.find(',') == std::string::npos, Err::ParseError,
            origin + ":" + std::to_string(line_no) + ": paths containing commas are rejected");
    require(std::find(label_set.begin(), label_set.end(), genre) != label_set.end(),
            Err::UnknownGenre,
            origin + ":" + std::to_string(line_no) + ": genre '" + genre + "'");
    require(seen_paths.insert(path).second, Err::DuplicatePath,
            origin + ":" + std::to_string(line_no) + ": " + path);
    m.entries.push_back({path, genre});
    if (last) break;
  }

  require(!m.entries.empty(), Err::EmptyManifest, origin + " holds no entries");
  return m;
}

DatasetManifest load_manifest(const std::string& path, const std::vector<std::string>& label_set) {
  return parse_manifest(read_text_file(path), path, label_set);
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::string out = "path,genre\n";
  for (const ManifestEntry& e : manifest.entries) out += e.path + "," + e.genre + "\n";
  write_text_file(path, out);
}

const char* split_part_name(SplitPart p) {
  switch (p) {
    case SplitPart::Train: return "train";
    case SplitPart::Val: return "val";
    case SplitPart::Test: return "test";
  }
  return "?";
}

SplitAssignment stratified_split(const DatasetManifest& manifest, uint64_t seed,
                                 std::array<double, 3> fractions) {
  double frac_sum = fractions[0] + fractions[1] + fractions[2];
  require(fractions[0] > 0 && fractions[1] > 0 && fractions[2] > 0 &&
              std::abs(frac_sum - 1.0) < 1e-9,
          Err::InvalidArgument, "fractions must be positive and sum to 1");

  SplitAssignment split;
  split.seed = seed;
  split.fractions = fractions;
  Rng rng(seed);

  for (size_t g = 0; g < manifest.label_set.size(); ++g) {
    std::vector<size_t> members;
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].genre == manifest.label_set[g]) members.push_back(i);
    }
    if (members.empty()) continue;
    require(members.size() >= 3, Err::GenreTooSmall,
            "genre '" + manifest.label_set[g] + "' has only " +
                std::to_string(members.size()) + " recordings (need >= 3)");
    rng.shuffle(members);

    // largest-remainder apportionment of the genre's recordings
    const double n = static_cast<double>(members.size());
    size_t counts[3];
    double remainders[3];
    size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double ideal = n * fractions[static_cast<size_t>(k)];
      counts[k] = static_cast<size_t>(std::floor(ideal));
      remainders[k] = ideal - std::floor(ideal);
      assigned += counts[k];
    }
    size_t leftover = members.size() - assigned;
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
      return a < b;
    });
    for (size_t k = 0; k < leftover; ++k) ++counts[order[k % 3]];

    size_t at = 0;
    for (size_t k = 0; k < counts[0]; ++k) split.train.push_back(members[at++]);
    for (size_t k = 0; k < counts[1]; ++k) split.val.push_back(members[at++]);
    for (size_t k = 0; k < counts[2]; ++k) split.test.push_back(members[at++]);
  }

  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void write_split_csv(const std::string& path, const DatasetManifest& manifest,
                     const SplitAssignment& split) {
  std::string out = "path,genre,split\n";
  std::vector<SplitPart> part(manifest.entries.size(), SplitPart::Train);
  for (size_t i : split.val) part[i] = SplitPart::Val;
  for (size_t i : split.test) part[i] = SplitPart::Test;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    out += manifest.entries[i].path + "," + manifest.entries[i].genre + "," +
           split_part_name(part[i]) + "\n";
  }
  write_text_file(path, out);
}

std::vector<SplitRow> read_split_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<SplitRow> rows;
  size_t pos = 0, line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      require(line == "path,genre,split", Err::ParseError,
              path + ":" + std::to_string(line_no) + ": expected header 'path,genre,split'");
      have_header = true;
      continue;
    }
    const size_t c1 = line.find(',');
    const size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos, Err::ParseError,
            path + ":" + std::to_string(line_no) + ": expected 'path,genre,split'");
    SplitRow row;
    row.path = line.substr(0, c1);
    row.genre = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string part = line.substr(c2 + 1);
    if (part == "train") {
      row.part = SplitPart::Train;
    } else if (part == "val") {
      row.part = SplitPart::Val;
    } else if (part == "test") {
      row.part = SplitPart::Test;
    } else {
      fail(Err::ParseError, path + ":" + std::to_string(line_no) + ": bad split '" + part + "'");
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), Err::EmptyManifest, path + " holds no split rows");
  return rows;
}

uint64_t split_hash(const DatasetManifest& manifest, const SplitAssignment& split) {
  std::vector<std::string> rows;
  std::vector<SplitPart> part(manifest.entries.size(), SplitPart::Train);
  for (size_t i : split.val) part[i] = SplitPart::Val;
  for (size_t i : split.test) part[i] = SplitPart::Test;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    rows.push_back(manifest.entries[i].path + "\t" + split_part_name(part[i]));
  }
  std::sort(rows.begin(), rows.end());
  uint64_t h = 1469598103934665603ULL;
  for (const std::string& row : rows) {
    for (char c : row) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ULL;
    }
    h ^= '\n';
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace bmgc
