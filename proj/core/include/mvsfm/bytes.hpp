#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvsfm/error.hpp"

namespace mvsfm {

// Positioned little-endian reader over an in-memory buffer. Callers check
// remaining() and raise their own error codes; the read_* methods assume the
// bytes are there.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  size_t pos() const noexcept { return pos_; }
  size_t remaining() const noexcept { return data_.size() - pos_; }
  bool eof() const noexcept { return pos_ >= data_.size(); }

  uint8_t read_u8() { return data_[pos_++]; }

  uint16_t read_u16le() {
    uint16_t v = static_cast<uint16_t>(data_[pos_]) |
                 static_cast<uint16_t>(data_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }

  uint32_t read_u32le() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t read_u64le() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  int16_t read_i16le() { return static_cast<int16_t>(read_u16le()); }

  std::span<const uint8_t> read_bytes(size_t n) {
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(size_t n) { pos_ += n; }

 private:
  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

// Append-only little-endian writer.
class ByteWriter {
 public:
  explicit ByteWriter(std::vector<uint8_t>& out) : out_(out) {}

  void put_u8(uint8_t v) { out_.push_back(v); }

  void put_u16le(uint16_t v) {
    out_.push_back(static_cast<uint8_t>(v));
    out_.push_back(static_cast<uint8_t>(v >> 8));
  }

  void put_u32le(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  void put_u64le(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  void put_i16le(int16_t v) { put_u16le(static_cast<uint16_t>(v)); }

  void put_bytes(std::span<const uint8_t> bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }

 private:
  std::vector<uint8_t>& out_;
};

struct Leb128 {
  uint64_t value = 0;
  size_t length = 0;  // bytes consumed
};

// Unsigned LEB128 with the AV1 constraints: at most 8 bytes, value below 2^32.
Leb128 read_leb128(ByteReader& reader);
void write_leb128(ByteWriter& writer, uint64_t value);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);
std::string read_file_text(const std::filesystem::path& path);

// FNV-1a, used for input digests in run manifests (not cryptographic).
uint64_t fnv1a64(std::span<const uint8_t> bytes);
std::string fnv1a64_hex(std::span<const uint8_t> bytes);

}  // namespace mvsfm
