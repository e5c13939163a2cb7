#include <doctest.h>

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "bmgc/dataset.hpp"
#include "bmgc/error.hpp"
#include "bmgc/io_util.hpp"

using namespace bmgc;

namespace {

Err thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Err::IoError;
}

DatasetManifest uniform_manifest(size_t per_genre) {
  DatasetManifest m;
  m.label_set = default_genres();
  for (const std::string& g : m.label_set) {
    for (size_t i = 0; i < per_genre; ++i) {
      m.entries.push_back({g + "/" + std::to_string(i) + ".wav", g});
    }
  }
  return m;
}

}  // namespace

TEST_CASE("manifest parsing") {
  SUBCASE("two valid rows") {
    DatasetManifest m =
        parse_manifest("path,genre\na.wav,folk\nb.wav,palligiti\n", "test");
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].path == "a.wav");
    CHECK(m.genre_index("folk") == 8);
  }
  SUBCASE("unknown genre reports the line") {
    try {
      parse_manifest("path,genre\na.wav,folk\nb.wav,jazz\n", "test");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == Err::UnknownGenre);
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  SUBCASE("empty file") {
    CHECK(thrown_code([] { parse_manifest("", "test"); }) == Err::EmptyManifest);
    CHECK(thrown_code([] { parse_manifest("path,genre\n", "test"); }) == Err::EmptyManifest);
  }
  SUBCASE("duplicate path") {
    CHECK(thrown_code([] {
            parse_manifest("path,genre\na.wav,folk\na.wav,folk\n", "test");
          }) == Err::DuplicatePath);
  }
  SUBCASE("comma in path is rejected") {
    CHECK(thrown_code([] {
            parse_manifest("path,genre\na,b.wav,folk\n", "test");
          }) == Err::ParseError);
  }
  SUBCASE("missing header") {
    CHECK(thrown_code([] { parse_manifest("a.wav,folk\n", "test"); }) == Err::ParseError);
  }
}

TEST_CASE("stratified split on 10x10 recordings") {
  DatasetManifest m = uniform_manifest(10);
  SplitAssignment split = stratified_split(m, 7);

  CHECK(split.train.size() == 70);
  CHECK(split.val.size() + split.test.size() == 30);

  // partition covers every recording exactly once
  std::set<size_t> seen;
  for (const std::vector<size_t>* part : {&split.train, &split.val, &split.test}) {
    for (size_t i : *part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 100);

  // per-genre proportions within one item: 7 train, then 1/2 or 2/1
  std::map<std::string, std::array<size_t, 3>> counts;
  for (size_t i : split.train) ++counts[m.entries[i].genre][0];
  for (size_t i : split.val) ++counts[m.entries[i].genre][1];
  for (size_t i : split.test) ++counts[m.entries[i].genre][2];
  for (const auto& [genre, c] : counts) {
    CHECK(c[0] == 7);
    CHECK(c[1] + c[2] == 3);
    CHECK(c[1] >= 1);
    CHECK(c[2] >= 1);
  }
}

TEST_CASE("stratified split is deterministic per seed") {
  DatasetManifest m = uniform_manifest(8);
  SplitAssignment a = stratified_split(m, 42);
  SplitAssignment b = stratified_split(m, 42);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  SplitAssignment c = stratified_split(m, 43);
  CHECK(a.train != c.train);  // overwhelmingly likely for 80 recordings
  CHECK(split_hash(m, a) == split_hash(m, b));
  CHECK(split_hash(m, a) != split_hash(m, c));
}

TEST_CASE("genre with two recordings is too small") {
  DatasetManifest m = uniform_manifest(3);
  m.entries.push_back({"x0.wav", "folk"});
  DatasetManifest small;
  small.label_set = default_genres();
  small.entries = {{"a.wav", "folk"}, {"b.wav", "folk"}, {"c.wav", "palligiti"},
                   {"d.wav", "palligiti"}, {"e.wav", "palligiti"}};
  try {
    stratified_split(small, 1);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == Err::GenreTooSmall);
  }
}

TEST_CASE("split csv round trip") {
  DatasetManifest m = uniform_manifest(5);
  SplitAssignment split = stratified_split(m, 9);
  const std::string path = "/tmp/bmgc_test_split.csv";
  write_split_csv(path, m, split);
  std::vector<SplitRow> rows = read_split_csv(path);
  REQUIRE(rows.size() == m.entries.size());

  std::map<std::string, SplitPart> expected;
  for (size_t i : split.train) expected[m.entries[i].path] = SplitPart::Train;
  for (size_t i : split.val) expected[m.entries[i].path] = SplitPart::Val;
  for (size_t i : split.test) expected[m.entries[i].path] = SplitPart::Test;
  for (const SplitRow& row : rows) {
    CHECK(expected.at(row.path) == row.part);
  }
  std::filesystem::remove(path);
}

TEST_CASE("fraction validation") {
  DatasetManifest m = uniform_manifest(5);
  CHECK_THROWS_AS(stratified_split(m, 1, {0.5, 0.5, 0.5}), Error);
  CHECK_THROWS_AS(stratified_split(m, 1, {1.0, 0.0, 0.0}), Error);
}
