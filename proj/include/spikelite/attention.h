// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Attention mechanisms over [heads, seq, d] tensors: causal softmax (with
// optional bidirectional sink prefix), sliding-window softmax, linear
// attention and gated linear attention. The linear family comes in parallel,
// recurrent and chunkwise forms that compute the same function.
//
// Kernels use the raw score q.k with no 1/sqrt(d) factor; callers that want
// the usual scaling fold it into q. Reductions run in float32 in key order.

#ifndef SPIKELITE_ATTENTION_H_
#define SPIKELITE_ATTENTION_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "spikelite/tensor.h"

namespace spikelite {

struct AttentionInputs {
  Tensor q;  // [heads, seq, d_k]
  Tensor k;  // [heads, seq, d_k]
  Tensor v;  // [heads, seq, d_v]

  std::size_t heads() const { return q.dim(0); }
  std::size_t seq() const { return q.dim(1); }
  std::size_t d_k() const { return q.dim(2); }
  std::size_t d_v() const { return v.dim(2); }

  // Throws kDimension on inconsistent shapes, kEmptyInput on seq == 0.
  void Validate() const;
};

// How linear-attention outputs are normalized per head.
//   kNone: raw q S (the plain recurrence).
//   kRms:  o / rms(o) over d_v.
//   kSum:  o / (q . z) where z accumulates (decayed) keys; equals dividing by
//          the attention-map row sum.
enum class OutputNorm { kNone, kRms, kSum };

const char* OutputNormName(OutputNorm norm);
OutputNorm ParseOutputNorm(std::string_view name);

// Fixed-size state that replaces the KV cache for linear attention.
struct RecurrentState {
  Tensor s;                          // [heads, d_k, d_v]
  std::optional<Tensor> normalizer;  // [heads, d_k], only for kSum

  static RecurrentState Zeros(std::size_t heads, std::size_t d_k,
                              std::size_t d_v, bool with_normalizer = false);
  std::size_t bytes() const;
};

// Per-token decay in [0, 1] for each key channel: [heads, seq, d_k].
struct GateVector {
  Tensor g;
  void Validate() const;  // kDomain if any entry leaves [0, 1] or is NaN
};

enum class MapKind { kSoftmax, kWindowed, kLinear };

struct AttentionMap {
  Tensor a;  // [heads, seq, seq]
  MapKind kind;
};

Tensor SoftmaxAttention(const AttentionInputs& in, std::size_t sink_count = 0);
Tensor SlidingWindowAttention(const AttentionInputs& in, std::size_t window);

// One softmax-weighted read: out = sum_j softmax(q.keys_j) values_j over the
// rows of `keys` [m, d_k] and `values` [m, d_v], in row order.
void SoftmaxRead(std::span<const float> q, std::span<const float> keys,
                 std::span<const float> values, std::span<float> out);

// O = (Q K^T (.) M) V with binary causal M.
Tensor LinearAttentionParallel(const AttentionInputs& in,
                               OutputNorm norm = OutputNorm::kNone);
// Scan of LinearAttentionStep over the whole sequence.
Tensor LinearAttentionRecurrent(const AttentionInputs& in,
                                OutputNorm norm = OutputNorm::kNone,
                                RecurrentState* state = nullptr);

// S <- S + k^T v;  o = q S.  q_t, k_t: [heads, d_k]; v_t: [heads, d_v].
Tensor LinearAttentionStep(const Tensor& q_t, const Tensor& k_t,
                           const Tensor& v_t, RecurrentState& state,
                           OutputNorm norm = OutputNorm::kNone);

// S <- diag(g) S + k^T v;  o = q S.  g_t: [heads, d_k].
Tensor GlaStep(const Tensor& q_t, const Tensor& k_t, const Tensor& v_t,
               const Tensor& g_t, RecurrentState& state,
               OutputNorm norm = OutputNorm::kNone);

Tensor GlaRecurrent(const AttentionInputs& in, const GateVector& gate,
                    OutputNorm norm = OutputNorm::kNone,
                    RecurrentState* state = nullptr);

// Quadratic form: o_t = sum_{s<=t} (q_t (.) prod_{s<l<=t} g_l) . k_s  v_s.
Tensor GlaParallel(const AttentionInputs& in, const GateVector& gate,
                   OutputNorm norm = OutputNorm::kNone);

// Blocks of `chunk` tokens: intra-block pairs are evaluated in parallel form,
// the state carries everything before the block. When `state` is given it
// seeds the first block and receives the final state.
Tensor GlaChunkwise(const AttentionInputs& in, const GateVector& gate,
                    std::size_t chunk, OutputNorm norm = OutputNorm::kNone,
                    RecurrentState* state = nullptr);

// g = 1 - k for keys already squashed into [0, 1].
GateVector KeyTiedGate(const Tensor& k);

// Explicit [heads, seq, seq] map whose product with V reproduces the
// corresponding attention output (kLinear reproduces the kNone variant).
// The kLinear map is the unmasked kernel Q K^T, so its rank is at most d_k;
// ApplyAttentionMap restricts it to the causal triangle.
AttentionMap BuildAttentionMap(const AttentionInputs& in, MapKind kind,
                               std::optional<std::size_t> window = {},
                               std::size_t sink_count = 0);

// Applies map . V per head (causally masked for kLinear); used to check
// map/output correspondence.
Tensor ApplyAttentionMap(const AttentionMap& map, const Tensor& v);

}  // namespace spikelite

#endif  // SPIKELITE_ATTENTION_H_
