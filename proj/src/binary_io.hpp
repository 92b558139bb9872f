#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aimdit/error.hpp"

namespace aimdit::io {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

class ByteWriter {
 public:
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(double v) { put_u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  // Appends the CRC32 of everything written so far.
  void seal() { put_u32(crc32(bytes_.data(), bytes_.size())); }

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian reader; overruns throw `overrun_code`.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, ErrorCode overrun_code)
      : data_(data), size_(size), code_(overrun_code) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  void seek(std::size_t p) {
    if (p > size_) fail(code_, "offset " + std::to_string(p) + " beyond end of data (" + std::to_string(size_) + ")");
    pos_ = p;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double get_f32() { return static_cast<double>(std::bit_cast<float>(get_u32())); }

 private:
  void need(std::size_t n) const {
    if (n > size_ - pos_) fail(code_, "unexpected end of data at byte " + std::to_string(pos_));
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  ErrorCode code_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Verifies the trailing CRC32 and returns the payload size (without trailer).
std::size_t verify_sealed(const std::vector<std::uint8_t>& bytes, const std::string& what);

}  // namespace aimdit::io
