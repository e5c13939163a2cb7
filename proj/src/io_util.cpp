#include "bmgc/io_util.hpp"

#include <cstdio>

namespace bmgc {

std::vector<uint8_t> read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(Err::IoError, "cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long sz = std::ftell(f);
  if (sz < 0) {
    std::fclose(f);
    fail(Err::IoError, "cannot stat " + path);
  }
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(sz));
  size_t got = sz > 0 ? std::fread(buf.data(), 1, buf.size(), f) : 0;
  std::fclose(f);
  if (got != buf.size()) fail(Err::IoError, "short read on " + path);
  return buf;
}

void write_file(const std::string& path, const void* data, size_t size) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(Err::IoError, "cannot create " + path);
  size_t put = size > 0 ? std::fwrite(data, 1, size, f) : 0;
  int rc = std::fclose(f);
  if (put != size || rc != 0) fail(Err::IoError, "short write on " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

std::string read_text_file(const std::string& path) {
  std::vector<uint8_t> b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace bmgc
