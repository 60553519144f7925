// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/quantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace spikelite {
namespace {

// Each |q * count| term is at most 127 * 2^31, so this many terms always fit
// an int64 accumulator.
constexpr std::int64_t kMaxSafeTerms =
    std::numeric_limits<std::int64_t>::max() /
    (std::int64_t{kInt8Max} * std::numeric_limits<std::int32_t>::max());

void RequireShapes(const QuantizedMatrix& wq, std::size_t channels) {
  if (wq.cols != channels) {
    throw Error(ErrorCode::kDimension,
                "quantized weight has " + std::to_string(wq.cols) +
                    " inputs, counts have " + std::to_string(channels));
  }
  if (static_cast<std::int64_t>(channels) > kMaxSafeTerms) {
    throw Error(ErrorCode::kOverflow,
                "integer accumulation could exceed 64 bits");
  }
}

}  // namespace

Tensor QuantizedMatrix::Dequantize() const {
  Tensor w({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      w.at(r, c) = scale[r] * static_cast<float>(at(r, c));
  return w;
}

QuantizedMatrix QuantizeWeights(const Tensor& w) {
  if (w.rank() != 2) {
    throw Error(ErrorCode::kDimension, "quantize expects a matrix, got " +
                                           ShapeString(w.shape()));
  }
  w.RequireFinite("weight");
  QuantizedMatrix out;
  out.rows = w.dim(0);
  out.cols = w.dim(1);
  out.q.resize(w.size());
  out.scale.resize(out.rows);
  for (std::size_t r = 0; r < out.rows; ++r) {
    std::span<const float> row = w.slice({r});
    float max_abs = 0.0f;
    for (float x : row) max_abs = std::max(max_abs, std::abs(x));
    if (max_abs == 0.0f) {
      out.scale[r] = kZeroScale;
      continue;
    }
    out.scale[r] = max_abs / kInt8Max;
    for (std::size_t c = 0; c < out.cols; ++c) {
      // Quantize against max|row| directly so the row extremes land on +-127.
      const double code = std::round(static_cast<double>(row[c]) * kInt8Max /
                                     static_cast<double>(max_abs));
      out.q[r * out.cols + c] = static_cast<std::int8_t>(
          std::clamp(code, -static_cast<double>(kInt8Max),
                     static_cast<double>(kInt8Max)));
    }
  }
  return out;
}

double SpikeReconstructionMse(std::span<const Tensor> samples, float k,
                              Granularity granularity) {
  if (samples.empty()) {
    throw Error(ErrorCode::kEmptyInput, "calibration without samples");
  }
  double sq = 0.0;
  std::size_t n = 0;
  for (const Tensor& x : samples) {
    const Tensor rec = SpikeEncode(x, k, granularity).Reconstruct();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(x[i]) - rec[i];
      sq += d * d;
    }
    n += x.size();
  }
  return sq / static_cast<double>(n);
}

float CalibrateK(std::span<const Tensor> samples, std::span<const float> k_grid,
                 Granularity granularity) {
  if (samples.empty() || k_grid.empty()) {
    throw Error(ErrorCode::kEmptyInput,
                "calibration needs samples and a k grid");
  }
  float best_k = k_grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (float k : k_grid) {
    const double mse = SpikeReconstructionMse(samples, k, granularity);
    if (mse < best) {
      best = mse;
      best_k = k;
    }
  }
  return best_k;
}

Tensor W8SpikeProject(const QuantizedMatrix& wq,
                      const SpikeCountTensor& counts) {
  const std::size_t channels = counts.channels();
  RequireShapes(wq, channels);
  const std::size_t tokens = counts.tokens();
  Tensor y({tokens, wq.rows});
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::int32_t* c = counts.counts.data() + t * channels;
    const double v_th = counts.threshold_for_token(t);
    for (std::size_t r = 0; r < wq.rows; ++r) {
      const std::int8_t* q = wq.q.data() + r * wq.cols;
      std::int64_t acc = 0;
      for (std::size_t i = 0; i < channels; ++i)
        acc += static_cast<std::int64_t>(q[i]) * c[i];
      y.at(t, r) = static_cast<float>(static_cast<double>(wq.scale[r]) * v_th *
                                      static_cast<double>(acc));
    }
  }
  return y;
}

Tensor W8SpikeProjectEvents(const QuantizedMatrix& wq, const SpikeTrain& train,
                            const Tensor& v_th) {
  RequireShapes(wq, train.channels);
  if (v_th.size() != 1 && v_th.size() != train.tokens) {
    throw Error(ErrorCode::kDimension, "thresholds do not match spike tokens");
  }
  const bool positional = IsBitwise(train.scheme);
  Tensor y({train.tokens, wq.rows});
  std::vector<std::int64_t> acc(wq.rows);
  for (std::size_t tok = 0; tok < train.tokens; ++tok) {
    std::fill(acc.begin(), acc.end(), 0);
    for (std::size_t ch = 0; ch < train.channels; ++ch) {
      std::span<const std::int8_t> events = train.channel(tok, ch);
      for (std::size_t t = 0; t < events.size(); ++t) {
        if (events[t] == 0) continue;
        // One weight-column addition per event; bitwise steps shift it.
        std::int64_t mult = events[t];
        if (positional) {
          mult <<= t;
          if (train.scheme == SpikeScheme::kBitwiseTwos && t + 1 == events.size())
            mult = -mult;
        }
        for (std::size_t r = 0; r < wq.rows; ++r) acc[r] += mult * wq.at(r, ch);
      }
    }
    const double scale_t = v_th.size() == 1 ? v_th[0] : v_th[tok];
    for (std::size_t r = 0; r < wq.rows; ++r)
      y.at(tok, r) = static_cast<float>(static_cast<double>(wq.scale[r]) *
                                        scale_t * static_cast<double>(acc[r]));
  }
  return y;
}

}  // namespace spikelite
