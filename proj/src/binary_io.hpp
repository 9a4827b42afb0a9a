// Copyright 2026 The urbanseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte encoding shared by the bundle, checkpoint and PLY codecs.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "urbanseg/errors.hpp"

namespace urbanseg::detail {

template <typename T>
inline void to_little_endian(T value, char* out) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::memcpy(out, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(out, out + sizeof(T));
}

template <typename T>
inline T from_little_endian(const char* in) {
  char buf[sizeof(T)];
  std::memcpy(buf, in, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    to_little_endian(value, buf);
    bytes_.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view raw) { bytes_.append(raw); }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.append(s);
  }
  // Appends `count` elements of T from host memory, converted to little-endian.
  template <typename T>
  void put_array(const T* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes_.append(reinterpret_cast<const char*>(data), count * sizeof(T));
    } else {
      for (std::size_t i = 0; i < count; ++i) put(data[i]);
    }
  }

  std::string& bytes() { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T v = from_little_endian<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::string_view get_bytes(std::size_t n) {
    require(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string get_string(std::size_t max_len = 1u << 20) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) throw FormatError(context_ + ": implausible string length");
    return std::string(get_bytes(n));
  }
  template <typename T>
  void get_array(T* out, std::size_t count) {
    if (count != 0 && sizeof(T) > (bytes_.size() - pos_) / count) {
      throw FormatError(context_ + ": truncated payload");
    }
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out, bytes_.data() + pos_, count * sizeof(T));
      pos_ += count * sizeof(T);
    } else {
      for (std::size_t i = 0; i < count; ++i) out[i] = get<T>();
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(context_ + ": truncated data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace urbanseg::detail
