// Copyright Contributors to the mrvox project
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary writer/reader shared by the on-disk formats.
#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mrvox/error.hpp"

namespace mrvox {

class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    auto bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<std::byte>(bits & 0xFFu));
      bits = static_cast<U>(bits >> 8);
    }
  }

  void put_bytes(std::span<const std::byte> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void put_tag(std::string_view tag) {
    for (char c : tag) bytes_.push_back(static_cast<std::byte>(c));
  }

  std::vector<std::byte>& bytes() { return bytes_; }
  std::vector<std::byte> release() { return std::move(bytes_); }

 private:
  std::vector<std::byte> bytes_;
};

/// Sequential reader. Every read names the section it belongs to so a short
/// payload is reported as `FormatError(section, ...)`.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(const char* section) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    require(sizeof(T), section);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(std::to_integer<std::uint8_t>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::span<const std::byte> get_bytes(std::size_t count, const char* section) {
    require(count, section);
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }

  bool tag_matches(std::string_view tag) const {
    if (remaining() < tag.size()) return false;
    return std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) == 0;
  }

  void skip(std::size_t count, const char* section) { get_bytes(count, section); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void require(std::size_t count, const char* section) const {
    if (remaining() < count) {
      throw FormatError(section, "truncated: need " + std::to_string(count) + " bytes, have " +
                                     std::to_string(remaining()));
    }
  }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace mrvox
