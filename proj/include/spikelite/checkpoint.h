// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Single-file model container:
//
//   "SBKT" | u16 version | u64 manifest length | manifest JSON | payload
//
// The manifest holds the model config, per-layer merge weights, optional
// free-form metadata and one record per tensor {name, dtype, shape, offset,
// nbytes[, scale]}. Offsets are relative to the payload start. f32 tensors
// are stored as-is; i8 tensors reference an f32 per-row scale record.

#ifndef SPIKELITE_CHECKPOINT_H_
#define SPIKELITE_CHECKPOINT_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "spikelite/model.h"

namespace spikelite {

inline constexpr std::string_view kCheckpointMagic = "SBKT";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct SaveOptions {
  // Store projection matrices as per-row INT8 plus scales.
  bool int8_weights = false;
  nlohmann::json metadata = nlohmann::json::object();
};

std::string SerializeCheckpoint(const Model& model, const SaveOptions& options = {});
// kFormat on a bad magic, version, manifest or payload reference.
Model ParseCheckpoint(std::string_view bytes, nlohmann::json* metadata = nullptr);
nlohmann::json ReadManifest(std::string_view bytes);

void SaveCheckpoint(const Model& model, const std::string& path,
                    const SaveOptions& options = {});
Model LoadCheckpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace spikelite

#endif  // SPIKELITE_CHECKPOINT_H_
