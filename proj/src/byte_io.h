// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian encoding helpers shared by the file formats.

#ifndef SPIKELITE_SRC_BYTE_IO_H_
#define SPIKELITE_SRC_BYTE_IO_H_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "spikelite/tensor.h"

namespace spikelite::internal {

template <typename U>
void PutLe(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void PutF32(std::string& out, float v) {
  PutLe(out, std::bit_cast<std::uint32_t>(v));
}

// Sequential reader that reports truncation as kFormat.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U Le() {
    Need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  float F32() { return std::bit_cast<float>(Le<std::uint32_t>()); }

  std::string_view Take(std::size_t n) {
    Need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > remaining()) throw Error(ErrorCode::kFormat, "file truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, std::string_view bytes);

}  // namespace spikelite::internal

#endif  // SPIKELITE_SRC_BYTE_IO_H_
