// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Raw tensor file: "SBTN" | u32 rank | rank x u64 dims | f32 payload, all
// little-endian.

#ifndef SPIKELITE_TENSOR_FILE_H_
#define SPIKELITE_TENSOR_FILE_H_

#include <string>
#include <string_view>

#include "spikelite/tensor.h"

namespace spikelite {

inline constexpr std::string_view kTensorMagic = "SBTN";

std::string SerializeTensor(const Tensor& t);
Tensor ParseTensor(std::string_view bytes);

void WriteTensorFile(const Tensor& t, const std::string& path);
Tensor ReadTensorFile(const std::string& path);

}  // namespace spikelite

#endif  // SPIKELITE_TENSOR_FILE_H_
