#pragma once

// Little-endian encode/decode helpers for the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmaml/error.hpp"

namespace rmaml::detail {

class ByteWriter {
 public:
  void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void tag(const char (&magic)[5]) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(magic[i]));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : in_(bytes), what_(std::move(what)) {}

  void expect_tag(const char (&magic)[5]) {
    need(4, "magic");
    if (std::memcmp(in_.data() + pos_, magic, 4) != 0) {
      throw FormatError(what_ + ": bad magic bytes (expected '" + std::string(magic, 4) + "')");
    }
    pos_ += 4;
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* field) { return le<std::uint32_t>(field); }
  std::uint64_t u64(const char* field) { return le<std::uint64_t>(field); }
  double f64(const char* field) { return std::bit_cast<double>(le<std::uint64_t>(field)); }
  std::string str(const char* field) {
    const std::uint32_t n = u32(field);
    need(n, field);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> raw(std::size_t n, const char* field) {
    need(n, field);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }

  /// Throws naming the expected and actual total byte counts.
  void need(std::size_t n, const char* field) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated while reading " + field + ": expected at least " +
                        std::to_string(pos_ + n) + " bytes, got " + std::to_string(in_.size()));
    }
  }

 private:
  template <typename T>
  T le(const char* field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rmaml::detail
