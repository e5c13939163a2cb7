#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "bmgc/error.hpp"

namespace bmgc {

// Little-endian byte-stream writer backed by a vector.
class ByteWriter {
public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void bytes(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  const std::vector<uint8_t>& data() const { return buf_; }
  std::vector<uint8_t>&& take() { return std::move(buf_); }
  size_t size() const { return buf_.size(); }

private:
  std::vector<uint8_t> buf_;
};

// Little-endian reader over a byte span. Out-of-bounds reads raise the error
// code given at construction (TruncatedFile for containers).
class ByteReader {
public:
  ByteReader(const uint8_t* data, size_t size, Err on_short = Err::TruncatedFile)
      : data_(data), size_(size), on_short_(on_short) {}
  explicit ByteReader(const std::vector<uint8_t>& v, Err on_short = Err::TruncatedFile)
      : ByteReader(v.data(), v.size(), on_short) {}

  size_t pos() const { return pos_; }
  size_t remaining() const { return size_ - pos_; }
  void seek(size_t p) {
    require(p <= size_, on_short_, "seek past end of data");
    pos_ = p;
  }
  void skip(size_t n) { seek(pos_ + check(n)); }

  uint8_t u8() {
    check(1);
    return data_[pos_++];
  }
  uint16_t u16() {
    check(2);
    uint16_t v = static_cast<uint16_t>(data_[pos_]) | static_cast<uint16_t>(data_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    check(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    check(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
    pos_ += 8;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n) {
    check(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  void bytes(void* out, size_t n) {
    check(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }

private:
  size_t check(size_t n) {
    require(n <= size_ - pos_, on_short_, "unexpected end of data");
    return n;
  }
  const uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
  Err on_short_;
};

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const void* data, size_t size);
inline void write_file(const std::string& path, const std::vector<uint8_t>& data) {
  write_file(path, data.data(), data.size());
}
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace bmgc
