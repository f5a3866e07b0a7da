#pragma once

// Little-endian primitives shared by the checkpoint and dataset formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedft/errors.hpp"

namespace fedft::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void expect_magic(std::string_view magic, std::string_view field = "magic") {
    require(magic.size(), field);
    if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0)
      throw FormatError(std::string(field), pos_, "expected \"" + std::string(magic) + "\"");
    pos_ += magic.size();
  }

  std::uint8_t u8(std::string_view field) {
    require(1, field);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::uint16_t u16(std::string_view field) {
    require(2, field);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_ + i]) << (8 * i));
    pos_ += 2;
    return v;
  }

  std::uint64_t u64(std::string_view field) {
    require(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64(std::string_view field) { return std::bit_cast<double>(u64(field)); }

  // Guards `count * width` against both overflow and the remaining payload.
  void require_elements(std::uint64_t count, std::size_t width, std::string_view field) const {
    if (width != 0 && count > remaining() / width)
      throw FormatError(std::string(field), pos_,
                        "truncated payload: need " + std::to_string(count) + " x " +
                            std::to_string(width) + " bytes, have " +
                            std::to_string(remaining()));
  }

  void expect_end() const {
    if (pos_ != data_.size())
      throw FormatError("trailer", pos_, std::to_string(remaining()) + " unexpected trailing bytes");
  }

 private:
  void require(std::size_t n, std::string_view field) const {
    if (remaining() < n)
      throw FormatError(std::string(field), pos_,
                        "truncated: need " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()));
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace fedft::io
