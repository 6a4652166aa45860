#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmfuse/errors.hpp"

namespace mmfuse {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; add byte swaps before porting");

class BinWriter {
 public:
  explicit BinWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot open for writing: " + path);
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw DataError("write failed: " + path_);
  }
  void magic(const char tag[5]) { bytes(tag, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void f64_array(const double* data, std::size_t n) { bytes(data, n * sizeof(double)); }
  void f32_array(const float* data, std::size_t n) { bytes(data, n * sizeof(float)); }
  void utf8(const std::string& s) {  // u32 length prefix
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::uint64_t offset() { return static_cast<std::uint64_t>(out_.tellp()); }
  void close() {
    out_.close();
    if (!out_) throw DataError("close failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Reader over an in-memory byte buffer; every failure names the byte offset.
class BinReader {
 public:
  BinReader(std::string name, std::vector<char> data)
      : name_(std::move(name)), data_(std::move(data)) {}

  static BinReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path);
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return BinReader(path, std::move(data));
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > data_.size()) {
      throw DataError(name_ + ": truncated at byte " + std::to_string(pos_) + " reading " + what +
                      " (need " + std::to_string(n) + " bytes, have " +
                      std::to_string(data_.size() - pos_) + ")");
    }
  }

  void magic(const char tag[5], const char* what) {
    need(4, what);
    if (std::memcmp(data_.data() + pos_, tag, 4) != 0) {
      throw DataError(name_ + ": bad magic at byte " + std::to_string(pos_) + ", expected '" +
                      std::string(tag, 4) + "'");
    }
    pos_ += 4;
  }

  template <typename T>
  T scalar(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8(const char* what) { return scalar<std::uint8_t>(what); }
  std::uint16_t u16(const char* what) { return scalar<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return scalar<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return scalar<std::uint64_t>(what); }
  float f32(const char* what) { return scalar<float>(what); }
  double f64(const char* what) { return scalar<double>(what); }

  void f64_array(double* out, std::size_t n, const char* what) {
    need(n * sizeof(double), what);
    std::memcpy(out, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  void f32_array(float* out, std::size_t n, const char* what) {
    need(n * sizeof(float), what);
    std::memcpy(out, data_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  std::string utf8(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string utf8(const char* what) {  // u32 length prefix
    const std::uint32_t n = u32(what);
    return utf8(n, what);
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& name() const { return name_; }

  void expect_end(const char* what) const {
    if (!at_end()) {
      throw DataError(name_ + ": " + std::to_string(data_.size() - pos_) +
                      " unexpected trailing bytes after " + what);
    }
  }

 private:
  std::string name_;
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace mmfuse
