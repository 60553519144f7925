// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Toy hybrid language models: configuration, deterministic initialization,
// conversion from softmax-attention models, prefill/decode with per-layer
// caches, an optional spike-driven projection path, and prefill benchmarks.

#ifndef SPIKELITE_MODEL_H_
#define SPIKELITE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spikelite/analyzer.h"
#include "spikelite/attention.h"
#include "spikelite/hybrid.h"
#include "spikelite/moe.h"
#include "spikelite/quantizer.h"
#include "spikelite/spike_codec.h"
#include "spikelite/tensor.h"

namespace spikelite {

struct MoeSettings {
  std::size_t experts = 4;
  std::size_t top_k = 1;
  std::size_t shared = 1;
  RouterFn router = RouterFn::kSoftmax;

  void Validate() const;
  friend bool operator==(const MoeSettings&, const MoeSettings&) = default;
};

struct SpikeSettings {
  float k = 1.0f;
  SpikeScheme scheme = SpikeScheme::kTernary;
  Granularity granularity = Granularity::kPerToken;
  int bits = kDefaultBits;

  void Validate() const;
  friend bool operator==(const SpikeSettings&, const SpikeSettings&) = default;
};

struct ModelConfig {
  std::size_t depth = 4;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_head = 16;
  std::size_t vocab = 1024;
  std::size_t d_ff = 128;
  std::vector<LayerSpec> layout;
  std::optional<MoeSettings> moe;
  std::size_t window = kDefaultWindow;
  std::size_t sink_count = kDefaultSinkCount;
  std::optional<SpikeSettings> spike;
  Activation activation = Activation::kSilu;
  OutputNorm linear_norm = OutputNorm::kRms;
  std::size_t chunk = 64;
  float rope_base = 10000.0f;

  // Throws kDimension / kInvalidArgument on broken invariants.
  void Validate() const;
  AttentionGeometry geometry() const;

  // A config whose layout comes from BuildLayout(kind, depth) using this
  // struct's window and sink_count; MoE settings are added when needed.
  static ModelConfig ForKind(ModelKind kind, std::size_t depth, std::size_t d_model,
                             std::size_t heads, std::size_t d_head,
                             std::size_t vocab, std::size_t d_ff);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json ToJson(const ModelConfig& config);
// Accepts either an explicit "layout" list or a "family" name plus depth.
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

struct Layer {
  LayerSpec spec;
  MixerParams mixer;
  Tensor ffn_norm;               // [d_model]
  std::optional<DenseFFN> dense; // spec.ffn == dense
  std::optional<MoELayer> moe;   // spec.ffn == moe
};

struct Model {
  ModelConfig config;
  Tensor embedding;   // [vocab, d_model]
  std::vector<Layer> layers;
  Tensor final_norm;  // [d_model]
  Tensor lm_head;     // [vocab, d_model]

  std::size_t ParameterCount() const;
  // Parameters touched per token: routed experts count top_k times, embedding
  // rows are lookups and excluded.
  std::size_t ActiveParameterCount() const;
};

using TensorVisitor = std::function<void(const std::string& name, Tensor& t)>;
using ConstTensorVisitor =
    std::function<void(const std::string& name, const Tensor& t)>;

// Every parameter tensor with a stable dotted name, in a fixed order.
void VisitTensors(Model& model, const TensorVisitor& visit);
void VisitTensors(const Model& model, const ConstTensorVisitor& visit);

Model BuildModel(const ModelConfig& config, std::uint64_t seed);

// Replaces the default float matvec with the quantized spike-driven one:
// each input vector is spike-encoded with the adaptive threshold and
// multiplied by the INT8 weight in integers. Used for attention, gate and
// FFN projections; embedding, router and output head stay in float.
// Weights are quantized on first use and keyed by address, so they must
// outlive the projector unchanged.
class SpikeProjector {
 public:
  explicit SpikeProjector(SpikeSettings settings, bool collect_stats = true,
                          std::size_t window = kDefaultSparsityWindow);

  void Apply(const Tensor& w, std::span<const float> x, std::span<float> y);
  MatVecFn fn();

  const SpikeSettings& settings() const { return settings_; }
  FiringStats stats() const { return acc_.Finish(); }
  std::size_t projections() const { return projections_; }

 private:
  SpikeSettings settings_;
  bool collect_stats_;
  FiringAccumulator acc_;
  std::unordered_map<const Tensor*, QuantizedMatrix> quantized_;
  std::size_t projections_ = 0;
};

struct PrefillResult {
  std::vector<float> logits;  // last position, [vocab]
  std::vector<LayerCache> caches;
};

PrefillResult Prefill(const Model& model, std::span<const std::int32_t> tokens,
                      const MatVecFn& matvec = {});

// Consumes one token and returns its next-token logits; caches advance.
std::vector<float> DecodeStep(const Model& model, std::int32_t token,
                              std::vector<LayerCache>& caches,
                              const MatVecFn& matvec = {});

std::size_t CacheBytes(const std::vector<LayerCache>& caches);

// Normalized mixer input of layer `layer` for the given tokens [n, d_model].
Tensor LayerInput(const Model& model, std::span<const std::int32_t> tokens,
                  std::size_t layer);

std::int32_t Argmax(std::span<const float> logits);

struct GenerateResult {
  std::vector<std::int32_t> tokens;  // generated ids
  std::vector<float> last_logits;
};

// Greedy generation: prefill, then `steps` decode steps.
GenerateResult Generate(const Model& model, std::span<const std::int32_t> prompt,
                        std::size_t steps, const MatVecFn& matvec = {});

struct ConversionPlan {
  std::vector<LayerSpec> layers;  // target per source layer
  std::optional<MoeSettings> moe;
  std::uint64_t seed = 0;
};

// Plan document: {"layers": ["SWA", ...] | [LayerSpec...]} or
// {"family": "7B-like"} or {"target": "LA"}, plus optional "window",
// "sink_count", "gate", "seed" and "moe": {experts, top_k, shared, router,
// layers}.
ConversionPlan PlanFromJson(const nlohmann::json& j, const ModelConfig& source);

struct LayerConversion {
  std::size_t layer = 0;
  std::string from;
  std::string to;
  std::string ffn;
  std::optional<double> scaling_factor;
};

using ConversionSummary = std::vector<LayerConversion>;
nlohmann::json ToJson(const ConversionSummary& summary);

// Reuses the softmax model's Q/K/V/O and FFN weights under the plan's
// attention kinds. Linear branches get fresh low-rank gates; MoE layers are
// upcycled from the dense FFN.
Model ConvertFromSoftmax(const Model& source, const ConversionPlan& plan,
                         ConversionSummary* summary = nullptr);

struct BenchmarkResult {
  std::vector<std::size_t> lengths;
  std::vector<double> mean_seconds;
  std::size_t repeats = 0;
  double exponent = 0.0;  // slope of log(time) vs log(n)
};

// Least-squares slope of log(y) against log(x).
double FitLogLogSlope(std::span<const double> x, std::span<const double> y);

BenchmarkResult BenchmarkPrefill(const Model& model,
                                 std::span<const std::size_t> lengths,
                                 std::size_t repeats, std::uint64_t seed = 0);

inline constexpr double kReferenceTgs = 1558.0;
inline constexpr double kReferenceMfu = 0.234;

struct ThroughputReport {
  double tgs = 0.0;  // tokens / second / device
  double mfu = 0.0;  // 2 * params * tokens / second / peak
};

ThroughputReport TgsMfuReport(double tokens, double seconds, std::size_t devices,
                              double params, double peak_flops);

nlohmann::json ToJson(const BenchmarkResult& result);
nlohmann::json ToJson(const ThroughputReport& report);

// Synthetic token stream of the given length.
std::vector<std::int32_t> SyntheticTokens(std::size_t n, std::size_t vocab,
                                          std::uint64_t seed);

}  // namespace spikelite

#endif  // SPIKELITE_MODEL_H_
