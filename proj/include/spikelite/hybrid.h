// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Hybrid attention layers.
//
// A layer's token mixer is either a single attention mechanism or two
// mechanisms run side by side on the same input whose outputs are
// RMS-normalized and merged with scalar weights. Mixers sit inside a
// pre-norm residual skeleton:
//
//   h = x + mixer(rms(x));   out = h + ffn(rms(h))

#ifndef SPIKELITE_HYBRID_H_
#define SPIKELITE_HYBRID_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "spikelite/attention.h"
#include "spikelite/moe.h"
#include "spikelite/tensor.h"

namespace spikelite {

inline constexpr std::size_t kDefaultWindow = 32;
inline constexpr std::size_t kDefaultSinkCount = 4;

enum class AttentionKind {
  kFull,                   // "FA"
  kSliding,                // "SWA"
  kLinear,                 // "LA"
  kParallelLinearSliding,  // "LA+SWA"
  kParallelLinearFull,     // "LA+FA"
};

enum class FfnKind { kDense, kMoe };

// How a linear-attention branch derives its decay.
enum class GateKind {
  kLowRank,   // sigmoid(up(down(x)) + bias), rank max(1, d_head/8)
  kKeyTied,   // 1 - k
  kNone,      // no decay: plain linear attention
};

const char* AttentionKindName(AttentionKind kind);
AttentionKind ParseAttentionKind(std::string_view name);
const char* FfnKindName(FfnKind kind);
FfnKind ParseFfnKind(std::string_view name);
const char* GateKindName(GateKind kind);
GateKind ParseGateKind(std::string_view name);

bool HasSliding(AttentionKind kind);
bool HasFull(AttentionKind kind);
bool HasLinear(AttentionKind kind);
bool IsParallel(AttentionKind kind);

struct LayerSpec {
  AttentionKind attention = AttentionKind::kLinear;
  std::optional<std::size_t> window;  // present iff a sliding branch exists
  FfnKind ffn = FfnKind::kDense;
  std::size_t sink_count = 0;  // only with a full-attention branch
  GateKind gate = GateKind::kLowRank;

  void Validate() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

nlohmann::json ToJson(const LayerSpec& spec);
LayerSpec LayerSpecFromJson(const nlohmann::json& j);

struct MergeWeights {
  float w1 = 0.5f;
  float w2 = 0.5f;
};

enum class ModelKind {
  k7BLike,      // LA / SWA alternating, dense FFN
  k76BLike,     // parallel LA+SWA, LA+FA every 7th layer, MoE
  kLinearOnly,  // every layer LA
  kSoftmaxOnly, // every layer FA
  kSlidingOnly, // every layer SWA
};

const char* ModelKindName(ModelKind kind);
ModelKind ParseModelKind(std::string_view name);

struct LayoutOverrides {
  std::optional<std::size_t> window;
  std::optional<std::size_t> sink_count;
  std::optional<GateKind> gate;
};

// 1-based layer numbers carrying a full-attention branch in the 76B-like
// layout: ceil(depth/7) placements spread evenly, ending at the last layer.
std::vector<std::size_t> FullAttentionLayers(std::size_t depth);
// 1-based layer numbers that keep a dense FFN in the 76B-like layout: the
// 28-layer pattern {1,2,3,5,7,9,11} rescaled to `depth`.
std::vector<std::size_t> DenseFfnLayers(std::size_t depth);

std::vector<LayerSpec> BuildLayout(ModelKind kind, std::size_t depth,
                                   const LayoutOverrides& overrides = {});

// Shapes and numerics shared by every attention branch of a model.
struct AttentionGeometry {
  std::size_t d_model = 0;
  std::size_t heads = 0;
  std::size_t d_head = 0;
  OutputNorm linear_norm = OutputNorm::kRms;
  std::size_t chunk = 64;
  float rope_base = 10000.0f;

  std::size_t gate_rank() const { return d_head / 8 > 0 ? d_head / 8 : 1; }
};

// Weights of one attention branch. Linear branches with a low-rank gate use
// the gate_* tensors; full-attention branches with sinks use `sinks`.
struct AttentionParams {
  Tensor wq;         // [heads*d_head, d_model]
  Tensor wk;         // [heads*d_head, d_model]
  Tensor wv;         // [heads*d_head, d_model]
  Tensor wo;         // [d_model, heads*d_head]
  Tensor gate_down;  // [rank, d_model]
  Tensor gate_up;    // [heads*d_head, rank]
  Tensor gate_bias;  // [heads*d_head]
  Tensor sinks;      // [sink_count, d_model]
};

enum class MechanismKind { kFull, kSliding, kLinear };

struct BranchSpec {
  MechanismKind kind = MechanismKind::kLinear;
  std::size_t window = 0;
  std::size_t sink_count = 0;
  GateKind gate = GateKind::kLowRank;
};

// Branches of a layer in merge order (linear first for parallel kinds).
std::vector<BranchSpec> BranchesOf(const LayerSpec& spec);

AttentionParams InitAttentionParams(const BranchSpec& branch,
                                    const AttentionGeometry& geom,
                                    std::mt19937_64& rng);

struct MixerParams {
  Tensor norm_gain;                      // [d_model], pre-norm gain
  std::vector<AttentionParams> branches; // one or two
  MergeWeights merge;
};

MixerParams InitMixerParams(const LayerSpec& spec, const AttentionGeometry& geom,
                            std::mt19937_64& rng);

// Decode-time memory of one branch.
//   linear:  fixed-size recurrent state
//   sliding: last `capacity` rotated keys/values
//   full:    sink keys/values followed by every token's
struct BranchCache {
  MechanismKind kind = MechanismKind::kLinear;
  std::size_t capacity = 0;
  std::size_t position = 0;  // tokens consumed, sinks excluded
  std::size_t d_k = 0;
  std::size_t d_v = 0;
  std::vector<std::vector<float>> keys;    // per head, rows of d_k
  std::vector<std::vector<float>> values;  // per head, rows of d_v
  RecurrentState state;

  std::size_t entries() const;
  std::size_t bytes() const;
};

struct LayerCache {
  std::vector<BranchCache> branches;
  std::size_t bytes() const;
};

// Projects normalized inputs x [n, d_model] into branch-ready q/k/v
// (positions start at 0): scaled and rotated for softmax branches, squashed
// through a sigmoid for linear ones. Sink rows are not included.
AttentionInputs ProjectBranchInputs(const BranchSpec& branch,
                                    const AttentionParams& params,
                                    const AttentionGeometry& geom,
                                    const Tensor& x, const MatVecFn& matvec = {});

// Whole-sequence branch output [n, d_model] (after the output projection).
// Fills `cache` for continued decoding when given.
Tensor BranchForward(const BranchSpec& branch, const AttentionParams& params,
                     const AttentionGeometry& geom, const Tensor& x,
                     const MatVecFn& matvec = {}, BranchCache* cache = nullptr);

// One-token branch output [d_model] continuing from `cache`.
std::vector<float> BranchStep(const BranchSpec& branch,
                              const AttentionParams& params,
                              const AttentionGeometry& geom,
                              std::span<const float> x, BranchCache& cache,
                              const MatVecFn& matvec = {});

// Mixer output without the residual, for normalized input x [n, d_model].
Tensor MixerForward(const LayerSpec& spec, const MixerParams& params,
                    const AttentionGeometry& geom, const Tensor& x,
                    const MatVecFn& matvec = {}, LayerCache* cache = nullptr);
std::vector<float> MixerStep(const LayerSpec& spec, const MixerParams& params,
                             const AttentionGeometry& geom,
                             std::span<const float> x, LayerCache& cache,
                             const MatVecFn& matvec = {});

// x + mixer(rms(x)) for a whole sequence x [n, d_model].
Tensor ResidualMixer(const Tensor& x, const LayerSpec& spec,
                     const MixerParams& params, const AttentionGeometry& geom,
                     const MatVecFn& matvec = {}, LayerCache* cache = nullptr);

// Two attention sublayers stacked: o = mix2(mix1(x)), each with pre-norm and
// residual.
Tensor SequentialBlock(const Tensor& x, const LayerSpec& first,
                       const LayerSpec& second, const MixerParams& first_params,
                       const MixerParams& second_params,
                       const AttentionGeometry& geom);

// Two branches on the same input: x + w1 rms(b1) + w2 rms(b2) where
// b_i = branch_i(rms(x)). `params.branches` holds the two branch weight sets;
// `params.merge` is ignored in favour of `merge`.
Tensor ParallelBlock(const Tensor& x, const LayerSpec& branch1,
                     const LayerSpec& branch2, const MergeWeights& merge,
                     const MixerParams& params, const AttentionGeometry& geom);

}  // namespace spikelite

#endif  // SPIKELITE_HYBRID_H_
