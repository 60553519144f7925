// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/tensor_file.h"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "byte_io.h"

namespace spikelite {
namespace internal {

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open '" + path + "': " + std::strerror(errno));
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed for '" + path + "'");
  return bytes;
}

void WriteFile(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write '" + path + "': " + std::strerror(errno));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

}  // namespace internal

std::string SerializeTensor(const Tensor& t) {
  std::string out(kTensorMagic);
  internal::PutLe(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) internal::PutLe(out, static_cast<std::uint64_t>(d));
  for (float v : t.data()) internal::PutF32(out, v);
  return out;
}

Tensor ParseTensor(std::string_view bytes) {
  internal::ByteReader r(bytes);
  if (r.remaining() < kTensorMagic.size() || r.Take(kTensorMagic.size()) != kTensorMagic) {
    throw Error(ErrorCode::kFormat, "not a tensor file (bad magic)");
  }
  const auto rank = r.Le<std::uint32_t>();
  if (rank == 0 || rank > 8) {
    throw Error(ErrorCode::kFormat, "unsupported tensor rank " + std::to_string(rank));
  }
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.Le<std::uint64_t>();
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d / 4) {
      throw Error(ErrorCode::kFormat, "tensor dimensions overflow");
    }
    count *= d;
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (r.remaining() != count * 4) {
    throw Error(ErrorCode::kFormat, "tensor payload has " + std::to_string(r.remaining()) +
                                        " bytes, expected " + std::to_string(count * 4));
  }
  std::vector<float> data(count);
  for (float& v : data) v = r.F32();
  return Tensor(std::move(shape), std::move(data));
}

void WriteTensorFile(const Tensor& t, const std::string& path) {
  internal::WriteFile(path, SerializeTensor(t));
}

Tensor ReadTensorFile(const std::string& path) {
  return ParseTensor(internal::ReadFile(path));
}

}  // namespace spikelite
