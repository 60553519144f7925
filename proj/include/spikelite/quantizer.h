// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPIKELITE_QUANTIZER_H_
#define SPIKELITE_QUANTIZER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spikelite/spike_codec.h"
#include "spikelite/tensor.h"

namespace spikelite {

inline constexpr int kInt8Max = 127;
inline constexpr float kZeroScale = 1e-8f;

// Symmetric per-output-channel INT8 weights; q in [-127, 127].
struct QuantizedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> q;  // [rows, cols]
  std::vector<float> scale;    // [rows]

  std::int8_t at(std::size_t r, std::size_t c) const { return q[r * cols + c]; }
  Tensor Dequantize() const;
};

// scale_r = max|w_r| / 127, q = round(w / scale). All-zero rows get
// kZeroScale and q = 0.
QuantizedMatrix QuantizeWeights(const Tensor& w);

// Mean squared error of v_th * round(x / v_th) against x over all samples.
double SpikeReconstructionMse(std::span<const Tensor> samples, float k,
                              Granularity granularity = Granularity::kPerToken);

// The grid value with the smallest reconstruction MSE (first one on ties).
float CalibrateK(std::span<const Tensor> samples, std::span<const float> k_grid,
                 Granularity granularity = Granularity::kPerToken);

// y = (scale (x) v_th) * (q . counts) with an exact int64 inner product.
Tensor W8SpikeProject(const QuantizedMatrix& wq, const SpikeCountTensor& counts);
// The same product accumulated spike event by spike event, in integers.
Tensor W8SpikeProjectEvents(const QuantizedMatrix& wq, const SpikeTrain& train,
                            const Tensor& v_th);

}  // namespace spikelite

#endif  // SPIKELITE_QUANTIZER_H_
