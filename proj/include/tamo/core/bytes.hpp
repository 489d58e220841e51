#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tamo/core/error.hpp"

namespace tamo::core {

inline void put_u8(std::vector<unsigned char>& out, std::uint8_t v) { out.push_back(v); }
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_bytes(std::vector<unsigned char>& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

/// Little-endian cursor over a byte buffer; overruns throw FormatError
/// mentioning `what`.
class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> bytes, std::string what) : b_(bytes), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw FormatError(what_ + " truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const unsigned char> b_;
  std::string what_;
  std::size_t pos_ = 0;
};

using Digest = std::array<unsigned char, 32>;
Digest sha256(std::span<const unsigned char> bytes);
std::string to_hex(std::span<const unsigned char> bytes);
inline std::string sha256_hex(std::span<const unsigned char> bytes) { return to_hex(sha256(bytes)); }

std::vector<unsigned char> read_file(const std::filesystem::path& path);
/// Writes to `path` via a sibling temporary file and an atomic rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace tamo::core
