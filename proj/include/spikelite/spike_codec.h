// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Adaptive-threshold spike encoding.
//
// An activation x becomes an integer count round(x / v_th) with
// v_th = mean(|x|) / k. A count can be re-expanded into a train of {-1, 0, 1}
// events over virtual timesteps under one of five schemes, and collapsed
// back exactly. The integrate-and-fire simulators are reference models for
// the single-step count.

#ifndef SPIKELITE_SPIKE_CODEC_H_
#define SPIKELITE_SPIKE_CODEC_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spikelite/tensor.h"

namespace spikelite {

inline constexpr float kZeroThreshold = 1e-6f;
inline constexpr int kDefaultBits = 8;

enum class Granularity { kPerToken, kPerTensor };

const char* GranularityName(Granularity g);
Granularity ParseGranularity(std::string_view name);

enum class SpikeScheme {
  kBinary,        // c ones, c >= 0
  kTernary,       // |c| events of sign(c)
  kBitwisePure,   // LSB-first binary digits, c >= 0
  kBitwiseBidir,  // signed digits {-1,0,1}, bits-1 steps
  kBitwiseTwos,   // two's complement digits, top digit weighs -2^(bits-1)
};

const char* SchemeName(SpikeScheme scheme);
SpikeScheme ParseScheme(std::string_view name);
bool IsBitwise(SpikeScheme scheme);

// Integer counts for an activation tensor. The trailing axis is the channel
// axis; everything before it indexes tokens.
struct SpikeCountTensor {
  Shape shape;
  std::vector<std::int32_t> counts;
  Tensor v_th;  // [1] (per tensor) or [tokens] (per token)
  float k = 1.0f;

  std::size_t channels() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t tokens() const {
    return channels() == 0 ? 0 : counts.size() / channels();
  }
  float threshold_for_token(std::size_t token) const {
    return v_th.size() == 1 ? v_th[0] : v_th[token];
  }
  Tensor Reconstruct() const;  // v_th * counts
};

// mean(|x|)/k over the whole tensor ([1]) or over each token's channels
// ([tokens]). An all-zero group gets kZeroThreshold.
Tensor AdaptiveThreshold(const Tensor& x, float k, Granularity granularity);

// round-half-away-from-zero(x / v_th), with v_th broadcast per token.
SpikeCountTensor EncodeCounts(const Tensor& x, const Tensor& v_th,
                              float k = 1.0f);

// AdaptiveThreshold followed by EncodeCounts.
SpikeCountTensor SpikeEncode(const Tensor& x, float k,
                             Granularity granularity = Granularity::kPerToken);

enum class ResetMode { kHard, kSoft };

struct NeuronParams {
  double lambda = 1.0;  // membrane decay, (0, 1]
  ResetMode reset = ResetMode::kSoft;
  double v_reset = 0.0;
  void Validate() const;
};

// Leaky integrate-and-fire over an explicit input sequence x_1..x_T starting
// from v = 0. Returns s_t for each step.
std::vector<int> LifRun(std::span<const double> inputs, double v_th,
                        const NeuronParams& params);

// Total spikes of an IF/LIF neuron over T steps when the whole activation is
// delivered at the first step together with a v_th/2 bias; x_t = 0 after.
// Negative inputs are encoded as the negated count of |x|.
std::int64_t IfSimulate(double x, double v_th, int timesteps,
                        const NeuronParams& params);

struct SpikeTrain {
  SpikeScheme scheme = SpikeScheme::kTernary;
  std::size_t timesteps = 0;
  std::optional<int> bits;
  std::size_t tokens = 0;
  std::size_t channels = 0;
  std::vector<std::int8_t> events;  // [tokens, channels, timesteps]

  std::span<const std::int8_t> channel(std::size_t token,
                                       std::size_t ch) const {
    return std::span<const std::int8_t>(events).subspan(
        (token * channels + ch) * timesteps, timesteps);
  }
  std::size_t NonZeroEvents() const;
};

// Timesteps a scheme needs for the given counts (bitwise: fixed by width).
std::size_t SchemeTimesteps(SpikeScheme scheme, std::span<const std::int32_t> counts,
                            int bits = kDefaultBits);

// Throws kDomain for negative counts under unsigned schemes and kOverflow
// for counts outside the bit width.
SpikeTrain Expand(const SpikeCountTensor& counts, SpikeScheme scheme,
                  std::optional<int> bits = std::nullopt);
SpikeTrain ExpandCounts(std::span<const std::int32_t> counts,
                        std::size_t channels, SpikeScheme scheme,
                        std::optional<int> bits = std::nullopt);

// Exact inverse of Expand. kDomain on events the scheme cannot emit.
std::vector<std::int32_t> Collapse(const SpikeTrain& train);

// y = v_th * (W counts), W [out, channels]; one output row per token.
Tensor SpikeProject(const Tensor& w, const SpikeCountTensor& counts);
// Same projection accumulated event by event: v_th * sum_t weight_t (W s_t).
Tensor SpikeProjectEvents(const Tensor& w, const SpikeTrain& train,
                          const Tensor& v_th);

}  // namespace spikelite

#endif  // SPIKELITE_SPIKE_CODEC_H_
