// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/hybrid.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace spikelite {
namespace {

struct KindName {
  AttentionKind kind;
  const char* name;
};

constexpr KindName kAttentionNames[] = {
    {AttentionKind::kFull, "FA"},
    {AttentionKind::kSliding, "SWA"},
    {AttentionKind::kLinear, "LA"},
    {AttentionKind::kParallelLinearSliding, "LA+SWA"},
    {AttentionKind::kParallelLinearFull, "LA+FA"},
};

// The 28-layer dense-FFN pattern that DenseFfnLayers rescales.
constexpr std::size_t kDensePattern[] = {1, 2, 3, 5, 7, 9, 11};
constexpr double kDensePatternDepth = 28.0;

float Sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor RandomNormal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

void Project(const Tensor& w, std::span<const float> x, std::span<float> y,
             const MatVecFn& matvec) {
  if (matvec) {
    matvec(w, x, y);
  } else {
    MatVec(w, x, y);
  }
}

// Row-by-row projection so whole-sequence and one-token paths share the exact
// same arithmetic.
Tensor ProjectRows(const Tensor& w, const Tensor& x, const MatVecFn& matvec) {
  const std::size_t n = x.dim(0);
  Tensor y({n, w.dim(0)});
  for (std::size_t t = 0; t < n; ++t) Project(w, x.slice({t}), y.slice({t}), matvec);
  return y;
}

void ApplyRope(std::span<float> v, std::size_t pos, float base) {
  const std::size_t d = v.size(), half = d / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double theta = static_cast<double>(pos) *
                         std::pow(static_cast<double>(base),
                                  -2.0 * static_cast<double>(i) / static_cast<double>(d));
    const float c = static_cast<float>(std::cos(theta));
    const float s = static_cast<float>(std::sin(theta));
    const float a = v[i], b = v[i + half];
    v[i] = a * c - b * s;
    v[i + half] = a * s + b * c;
  }
}

// In-place per-token q/k preparation on [heads*d_head] rows.
void PrepareQk(const BranchSpec& branch, const AttentionGeometry& geom,
               std::span<float> q, std::span<float> k, std::size_t pos) {
  const std::size_t dh = geom.d_head;
  if (branch.kind == MechanismKind::kLinear) {
    for (float& v : q) v = Sigmoid(v);
    for (float& v : k) v = Sigmoid(v);
    return;
  }
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  for (float& v : q) v *= scale;
  for (std::size_t h = 0; h < geom.heads; ++h) {
    ApplyRope(q.subspan(h * dh, dh), pos, geom.rope_base);
    ApplyRope(k.subspan(h * dh, dh), pos, geom.rope_base);
  }
}

void TokenGate(const BranchSpec& branch, const AttentionParams& params,
               const AttentionGeometry& geom, std::span<const float> x,
               std::span<const float> k, std::span<float> g,
               const MatVecFn& matvec) {
  switch (branch.gate) {
    case GateKind::kLowRank: {
      std::vector<float> low(params.gate_down.dim(0));
      Project(params.gate_down, x, low, matvec);
      Project(params.gate_up, low, g, matvec);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = Sigmoid(g[i] + params.gate_bias[i]);
      return;
    }
    case GateKind::kKeyTied:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = 1.0f - k[i];
      return;
    case GateKind::kNone:
      std::fill(g.begin(), g.end(), 1.0f);
      return;
  }
  (void)geom;
}

// [n, heads*dh] -> [heads, n, dh]
Tensor SplitHeads(const Tensor& rows, std::size_t heads) {
  const std::size_t n = rows.dim(0), dh = rows.dim(1) / heads;
  Tensor out({heads, n, dh});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < dh; ++i) out.at(h, t, i) = rows.at(t, h * dh + i);
  return out;
}

Tensor MergeHeads(const Tensor& o) {
  const std::size_t heads = o.dim(0), n = o.dim(1), dh = o.dim(2);
  Tensor rows({n, heads * dh});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < dh; ++i) rows.at(t, h * dh + i) = o.at(h, t, i);
  return rows;
}

void CheckInput(const AttentionGeometry& geom, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != geom.d_model) {
    throw Error(ErrorCode::kDimension, "expected input [n, " +
                                           std::to_string(geom.d_model) +
                                           "], got " + ShapeString(x.shape()));
  }
  if (x.dim(0) == 0) throw Error(ErrorCode::kEmptyInput, "empty sequence");
}

void CheckParams(const BranchSpec& branch, const AttentionParams& p,
                 const AttentionGeometry& geom) {
  const std::size_t inner = geom.heads * geom.d_head;
  const Shape proj{inner, geom.d_model};
  if (p.wq.shape() != proj || p.wk.shape() != proj || p.wv.shape() != proj ||
      p.wo.shape() != Shape{geom.d_model, inner}) {
    throw Error(ErrorCode::kDimension, "attention projections do not match geometry");
  }
  if (branch.kind == MechanismKind::kLinear && branch.gate == GateKind::kLowRank) {
    const std::size_t r = geom.gate_rank();
    if (p.gate_down.shape() != Shape{r, geom.d_model} ||
        p.gate_up.shape() != Shape{inner, r} || p.gate_bias.shape() != Shape{inner}) {
      throw Error(ErrorCode::kDimension, "low-rank gate parameters do not match geometry");
    }
  }
  if (branch.kind == MechanismKind::kFull && branch.sink_count > 0 &&
      p.sinks.shape() != Shape{branch.sink_count, geom.d_model}) {
    throw Error(ErrorCode::kDimension, "sink embeddings do not match sink_count");
  }
}

Tensor MergeBranches(const std::vector<Tensor>& outs, const MergeWeights& merge) {
  if (!std::isfinite(merge.w1) || !std::isfinite(merge.w2)) {
    throw Error(ErrorCode::kNonFinite, "merge weights must be finite");
  }
  Tensor merged(outs[0].shape());
  const float w[2] = {merge.w1, merge.w2};
  const std::size_t d = outs[0].shape().back();
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor normed = outs[b];
    RmsNormInPlace(normed.data(), d);
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i] += w[b] * normed[i];
  }
  return merged;
}

BranchSpec SingleBranch(const LayerSpec& spec) {
  if (IsParallel(spec.attention)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("parallel branch must be a single mechanism, got ") +
                    AttentionKindName(spec.attention));
  }
  return BranchesOf(spec).front();
}

}  // namespace

const char* AttentionKindName(AttentionKind kind) {
  for (const KindName& k : kAttentionNames)
    if (k.kind == kind) return k.name;
  return "?";
}

AttentionKind ParseAttentionKind(std::string_view name) {
  for (const KindName& k : kAttentionNames)
    if (name == k.name) return k.kind;
  if (name == "parallel(LA+SWA)") return AttentionKind::kParallelLinearSliding;
  if (name == "parallel(LA+FA)") return AttentionKind::kParallelLinearFull;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown attention kind '" + std::string(name) + "'");
}

const char* FfnKindName(FfnKind kind) {
  return kind == FfnKind::kDense ? "dense" : "moe";
}

FfnKind ParseFfnKind(std::string_view name) {
  if (name == "dense") return FfnKind::kDense;
  if (name == "moe") return FfnKind::kMoe;
  throw Error(ErrorCode::kInvalidArgument, "unknown ffn kind '" + std::string(name) + "'");
}

const char* GateKindName(GateKind kind) {
  switch (kind) {
    case GateKind::kLowRank: return "low_rank";
    case GateKind::kKeyTied: return "key_tied";
    case GateKind::kNone: return "none";
  }
  return "?";
}

GateKind ParseGateKind(std::string_view name) {
  if (name == "low_rank") return GateKind::kLowRank;
  if (name == "key_tied") return GateKind::kKeyTied;
  if (name == "none") return GateKind::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown gate kind '" + std::string(name) + "'");
}

bool HasSliding(AttentionKind kind) {
  return kind == AttentionKind::kSliding ||
         kind == AttentionKind::kParallelLinearSliding;
}

bool HasFull(AttentionKind kind) {
  return kind == AttentionKind::kFull || kind == AttentionKind::kParallelLinearFull;
}

bool HasLinear(AttentionKind kind) {
  return kind == AttentionKind::kLinear || IsParallel(kind);
}

bool IsParallel(AttentionKind kind) {
  return kind == AttentionKind::kParallelLinearSliding ||
         kind == AttentionKind::kParallelLinearFull;
}

void LayerSpec::Validate() const {
  const char* name = AttentionKindName(attention);
  if (HasSliding(attention) != window.has_value()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + (window ? " takes no window" : " needs a window"));
  }
  if (window && *window == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sliding window must be >= 1");
  }
  if (sink_count > 0 && !HasFull(attention)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("sink tokens need a full-attention branch, not ") + name);
  }
}

nlohmann::json ToJson(const LayerSpec& spec) {
  nlohmann::json j = {
      {"attention", AttentionKindName(spec.attention)},
      {"window", nullptr},
      {"ffn", FfnKindName(spec.ffn)},
      {"sink_count", spec.sink_count},
      {"gate", GateKindName(spec.gate)},
  };
  if (spec.window) j["window"] = *spec.window;
  return j;
}

LayerSpec LayerSpecFromJson(const nlohmann::json& j) {
  try {
    LayerSpec s;
    s.attention = ParseAttentionKind(j.at("attention").get<std::string>());
    if (j.contains("window") && !j["window"].is_null())
      s.window = j["window"].get<std::size_t>();
    s.ffn = ParseFfnKind(j.value("ffn", std::string("dense")));
    s.sink_count = j.value("sink_count", std::size_t{0});
    s.gate = ParseGateKind(j.value("gate", std::string("low_rank")));
    s.Validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad layer spec: ") + e.what());
  }
}

const char* ModelKindName(ModelKind kind) {
  switch (kind) {
    case ModelKind::k7BLike: return "7B-like";
    case ModelKind::k76BLike: return "76B-like";
    case ModelKind::kLinearOnly: return "LA-only";
    case ModelKind::kSoftmaxOnly: return "FA-only";
    case ModelKind::kSlidingOnly: return "SWA-only";
  }
  return "?";
}

ModelKind ParseModelKind(std::string_view name) {
  for (ModelKind k : {ModelKind::k7BLike, ModelKind::k76BLike, ModelKind::kLinearOnly,
                      ModelKind::kSoftmaxOnly, ModelKind::kSlidingOnly})
    if (name == ModelKindName(k)) return k;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + std::string(name) + "'");
}

std::vector<std::size_t> FullAttentionLayers(std::size_t depth) {
  const std::size_t count = (depth + 6) / 7;
  std::vector<std::size_t> layers;
  for (std::size_t i = 1; i <= count; ++i) layers.push_back(i * depth / count);
  return layers;
}

std::vector<std::size_t> DenseFfnLayers(std::size_t depth) {
  std::vector<std::size_t> layers;
  for (std::size_t p : kDensePattern) {
    const auto scaled = static_cast<std::size_t>(
        std::lround(static_cast<double>(p) * static_cast<double>(depth) / kDensePatternDepth));
    const std::size_t layer = std::clamp<std::size_t>(scaled, 1, depth);
    if (std::find(layers.begin(), layers.end(), layer) == layers.end())
      layers.push_back(layer);
  }
  std::sort(layers.begin(), layers.end());
  return layers;
}

std::vector<LayerSpec> BuildLayout(ModelKind kind, std::size_t depth,
                                   const LayoutOverrides& overrides) {
  if (depth < 2) {
    throw Error(ErrorCode::kInvalidArgument, "layout depth must be >= 2");
  }
  const std::size_t window = overrides.window.value_or(kDefaultWindow);
  std::vector<LayerSpec> layout(depth);
  switch (kind) {
    case ModelKind::k7BLike:
      for (std::size_t i = 0; i < depth; ++i) {
        LayerSpec& s = layout[i];
        s.gate = overrides.gate.value_or(GateKind::kLowRank);
        if (i % 2 == 0) {
          s.attention = AttentionKind::kLinear;
        } else {
          s.attention = AttentionKind::kSliding;
          s.window = window;
        }
      }
      break;
    case ModelKind::k76BLike: {
      const auto full = FullAttentionLayers(depth);
      const auto dense = DenseFfnLayers(depth);
      for (std::size_t i = 0; i < depth; ++i) {
        LayerSpec& s = layout[i];
        const std::size_t layer = i + 1;
        s.gate = overrides.gate.value_or(GateKind::kKeyTied);
        if (std::find(full.begin(), full.end(), layer) != full.end()) {
          s.attention = AttentionKind::kParallelLinearFull;
          s.sink_count = overrides.sink_count.value_or(kDefaultSinkCount);
        } else {
          s.attention = AttentionKind::kParallelLinearSliding;
          s.window = window;
        }
        s.ffn = std::find(dense.begin(), dense.end(), layer) != dense.end()
                    ? FfnKind::kDense
                    : FfnKind::kMoe;
      }
      break;
    }
    case ModelKind::kLinearOnly:
      for (LayerSpec& s : layout) {
        s.attention = AttentionKind::kLinear;
        s.gate = overrides.gate.value_or(GateKind::kLowRank);
      }
      break;
    case ModelKind::kSoftmaxOnly:
      for (LayerSpec& s : layout) {
        s.attention = AttentionKind::kFull;
        s.sink_count = overrides.sink_count.value_or(0);
      }
      break;
    case ModelKind::kSlidingOnly:
      for (LayerSpec& s : layout) {
        s.attention = AttentionKind::kSliding;
        s.window = window;
      }
      break;
  }
  return layout;
}

std::vector<BranchSpec> BranchesOf(const LayerSpec& spec) {
  spec.Validate();
  const BranchSpec linear{MechanismKind::kLinear, 0, 0, spec.gate};
  switch (spec.attention) {
    case AttentionKind::kFull:
      return {{MechanismKind::kFull, 0, spec.sink_count, spec.gate}};
    case AttentionKind::kSliding:
      return {{MechanismKind::kSliding, *spec.window, 0, spec.gate}};
    case AttentionKind::kLinear:
      return {linear};
    case AttentionKind::kParallelLinearSliding:
      return {linear, {MechanismKind::kSliding, *spec.window, 0, spec.gate}};
    case AttentionKind::kParallelLinearFull:
      return {linear, {MechanismKind::kFull, 0, spec.sink_count, spec.gate}};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attention kind");
}

AttentionParams InitAttentionParams(const BranchSpec& branch,
                                    const AttentionGeometry& geom,
                                    std::mt19937_64& rng) {
  const std::size_t d = geom.d_model, inner = geom.heads * geom.d_head;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams p;
  p.wq = RandomNormal({inner, d}, in_std, rng);
  p.wk = RandomNormal({inner, d}, in_std, rng);
  p.wv = RandomNormal({inner, d}, in_std, rng);
  p.wo = RandomNormal({d, inner}, 1.0 / std::sqrt(static_cast<double>(inner)), rng);
  if (branch.kind == MechanismKind::kLinear && branch.gate == GateKind::kLowRank) {
    const std::size_t r = geom.gate_rank();
    p.gate_down = RandomNormal({r, d}, in_std, rng);
    p.gate_up = RandomNormal({inner, r}, 1.0 / std::sqrt(static_cast<double>(r)), rng);
    // Start close to "remember": sigmoid(3) ~ 0.95.
    p.gate_bias = Tensor::Full({inner}, 3.0f);
  }
  if (branch.kind == MechanismKind::kFull && branch.sink_count > 0)
    p.sinks = RandomNormal({branch.sink_count, d}, 1.0, rng);
  return p;
}

MixerParams InitMixerParams(const LayerSpec& spec, const AttentionGeometry& geom,
                            std::mt19937_64& rng) {
  MixerParams m;
  m.norm_gain = Tensor::Full({geom.d_model}, 1.0f);
  for (const BranchSpec& b : BranchesOf(spec))
    m.branches.push_back(InitAttentionParams(b, geom, rng));
  return m;
}

std::size_t BranchCache::entries() const {
  if (kind == MechanismKind::kLinear || keys.empty() || d_k == 0) return 0;
  return keys.front().size() / d_k;
}

std::size_t BranchCache::bytes() const {
  if (kind == MechanismKind::kLinear) return state.bytes();
  std::size_t floats = 0;
  for (const auto& k : keys) floats += k.size();
  for (const auto& v : values) floats += v.size();
  return floats * sizeof(float);
}

std::size_t LayerCache::bytes() const {
  std::size_t total = 0;
  for (const BranchCache& b : branches) total += b.bytes();
  return total;
}

AttentionInputs ProjectBranchInputs(const BranchSpec& branch,
                                    const AttentionParams& params,
                                    const AttentionGeometry& geom,
                                    const Tensor& x, const MatVecFn& matvec) {
  CheckInput(geom, x);
  CheckParams(branch, params, geom);
  Tensor q = ProjectRows(params.wq, x, matvec);
  Tensor k = ProjectRows(params.wk, x, matvec);
  Tensor v = ProjectRows(params.wv, x, matvec);
  for (std::size_t t = 0; t < x.dim(0); ++t)
    PrepareQk(branch, geom, q.slice({t}), k.slice({t}), t);
  return {SplitHeads(q, geom.heads), SplitHeads(k, geom.heads),
          SplitHeads(v, geom.heads)};
}

Tensor BranchForward(const BranchSpec& branch, const AttentionParams& params,
                     const AttentionGeometry& geom, const Tensor& x,
                     const MatVecFn& matvec, BranchCache* cache) {
  const std::size_t n = x.dim(0), heads = geom.heads, dh = geom.d_head;
  AttentionInputs in = ProjectBranchInputs(branch, params, geom, x, matvec);
  BranchCache fresh;
  fresh.kind = branch.kind;
  fresh.position = n;
  fresh.d_k = dh;
  fresh.d_v = dh;

  Tensor o;
  switch (branch.kind) {
    case MechanismKind::kFull: {
      const std::size_t s = branch.sink_count;
      if (s > 0) {
        // Sinks are an unrotated prefix; their query rows are discarded.
        const Tensor sk = SplitHeads(ProjectRows(params.wk, params.sinks, matvec), heads);
        const Tensor sv = SplitHeads(ProjectRows(params.wv, params.sinks, matvec), heads);
        auto prepend = [&](const Tensor& prefix, const Tensor& body) {
          Tensor out({heads, s + n, dh});
          for (std::size_t h = 0; h < heads; ++h) {
            std::copy_n(prefix.slice({h}).begin(), s * dh, out.slice({h}).begin());
            std::copy_n(body.slice({h}).begin(), n * dh, out.slice({h}).begin() + s * dh);
          }
          return out;
        };
        AttentionInputs full{prepend(Tensor({heads, s, dh}), in.q), prepend(sk, in.k),
                             prepend(sv, in.v)};
        const Tensor all = SoftmaxAttention(full, s);
        o = Tensor({heads, n, dh});
        for (std::size_t h = 0; h < heads; ++h)
          std::copy_n(all.slice({h}).begin() + s * dh, n * dh, o.slice({h}).begin());
        in.k = std::move(full.k);
        in.v = std::move(full.v);
      } else {
        o = SoftmaxAttention(in);
      }
      for (std::size_t h = 0; h < heads; ++h) {
        fresh.keys.emplace_back(in.k.slice({h}).begin(), in.k.slice({h}).end());
        fresh.values.emplace_back(in.v.slice({h}).begin(), in.v.slice({h}).end());
      }
      break;
    }
    case MechanismKind::kSliding: {
      o = SlidingWindowAttention(in, branch.window);
      fresh.capacity = branch.window;
      const std::size_t keep = std::min(n, branch.window);
      for (std::size_t h = 0; h < heads; ++h) {
        auto k = in.k.slice({h}), v = in.v.slice({h});
        fresh.keys.emplace_back(k.end() - keep * dh, k.end());
        fresh.values.emplace_back(v.end() - keep * dh, v.end());
      }
      break;
    }
    case MechanismKind::kLinear: {
      Tensor k_rows = MergeHeads(in.k);
      Tensor g_rows({n, heads * dh});
      for (std::size_t t = 0; t < n; ++t)
        TokenGate(branch, params, geom, x.slice({t}), k_rows.slice({t}),
                  g_rows.slice({t}), matvec);
      GateVector gate{SplitHeads(g_rows, heads)};
      fresh.state = RecurrentState::Zeros(heads, dh, dh,
                                          geom.linear_norm == OutputNorm::kSum);
      o = GlaChunkwise(in, gate, geom.chunk, geom.linear_norm, &fresh.state);
      break;
    }
  }
  if (cache) *cache = std::move(fresh);
  return ProjectRows(params.wo, MergeHeads(o), matvec);
}

std::vector<float> BranchStep(const BranchSpec& branch,
                              const AttentionParams& params,
                              const AttentionGeometry& geom,
                              std::span<const float> x, BranchCache& cache,
                              const MatVecFn& matvec) {
  if (x.size() != geom.d_model) {
    throw Error(ErrorCode::kDimension, "decode input has " + std::to_string(x.size()) +
                                           " features, expected " +
                                           std::to_string(geom.d_model));
  }
  if (cache.kind != branch.kind || cache.d_k != geom.d_head ||
      (branch.kind != MechanismKind::kLinear && cache.keys.size() != geom.heads)) {
    throw Error(ErrorCode::kInvalidArgument, "cache does not belong to this branch");
  }
  CheckParams(branch, params, geom);
  const std::size_t heads = geom.heads, dh = geom.d_head, inner = heads * dh;
  std::vector<float> q(inner), k(inner), v(inner), o(inner);
  Project(params.wq, x, q, matvec);
  Project(params.wk, x, k, matvec);
  Project(params.wv, x, v, matvec);
  PrepareQk(branch, geom, q, k, cache.position);

  if (branch.kind == MechanismKind::kLinear) {
    std::vector<float> g(inner);
    TokenGate(branch, params, geom, x, k, g, matvec);
    const Tensor out = GlaStep(Tensor({heads, dh}, q), Tensor({heads, dh}, k),
                               Tensor({heads, dh}, v), Tensor({heads, dh}, g),
                               cache.state, geom.linear_norm);
    std::copy(out.data().begin(), out.data().end(), o.begin());
  } else {
    for (std::size_t h = 0; h < heads; ++h) {
      auto& keys = cache.keys[h];
      auto& values = cache.values[h];
      keys.insert(keys.end(), k.begin() + h * dh, k.begin() + (h + 1) * dh);
      values.insert(values.end(), v.begin() + h * dh, v.begin() + (h + 1) * dh);
      if (branch.kind == MechanismKind::kSliding && keys.size() > cache.capacity * dh) {
        keys.erase(keys.begin(), keys.begin() + dh);
        values.erase(values.begin(), values.begin() + dh);
      }
      SoftmaxRead(std::span<const float>(q).subspan(h * dh, dh), keys, values,
                  std::span<float>(o).subspan(h * dh, dh));
    }
  }
  ++cache.position;
  std::vector<float> y(geom.d_model);
  Project(params.wo, o, y, matvec);
  return y;
}

Tensor MixerForward(const LayerSpec& spec, const MixerParams& params,
                    const AttentionGeometry& geom, const Tensor& x,
                    const MatVecFn& matvec, LayerCache* cache) {
  const std::vector<BranchSpec> branches = BranchesOf(spec);
  if (params.branches.size() != branches.size()) {
    throw Error(ErrorCode::kDimension, "mixer has " +
                                           std::to_string(params.branches.size()) +
                                           " branch weight sets for " +
                                           AttentionKindName(spec.attention));
  }
  if (cache) cache->branches.assign(branches.size(), {});
  std::vector<Tensor> outs;
  for (std::size_t b = 0; b < branches.size(); ++b)
    outs.push_back(BranchForward(branches[b], params.branches[b], geom, x, matvec,
                                 cache ? &cache->branches[b] : nullptr));
  if (outs.size() == 1) return std::move(outs.front());
  return MergeBranches(outs, params.merge);
}

std::vector<float> MixerStep(const LayerSpec& spec, const MixerParams& params,
                             const AttentionGeometry& geom,
                             std::span<const float> x, LayerCache& cache,
                             const MatVecFn& matvec) {
  const std::vector<BranchSpec> branches = BranchesOf(spec);
  if (params.branches.size() != branches.size() ||
      cache.branches.size() != branches.size()) {
    throw Error(ErrorCode::kInvalidArgument, "cache/model mismatch for " +
                                                 std::string(AttentionKindName(spec.attention)));
  }
  std::vector<Tensor> outs;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    std::vector<float> y =
        BranchStep(branches[b], params.branches[b], geom, x, cache.branches[b], matvec);
    outs.emplace_back(Shape{1, y.size()}, std::move(y));
  }
  if (outs.size() == 1) return outs.front().vec();
  return MergeBranches(outs, params.merge).vec();
}

Tensor ResidualMixer(const Tensor& x, const LayerSpec& spec,
                     const MixerParams& params, const AttentionGeometry& geom,
                     const MatVecFn& matvec, LayerCache* cache) {
  CheckInput(geom, x);
  Tensor xn = x;
  RmsNormInPlace(xn.data(), geom.d_model, 1e-6f, params.norm_gain.data());
  Tensor h = x;
  const Tensor mix = MixerForward(spec, params, geom, xn, matvec, cache);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += mix[i];
  return h;
}

Tensor SequentialBlock(const Tensor& x, const LayerSpec& first,
                       const LayerSpec& second, const MixerParams& first_params,
                       const MixerParams& second_params,
                       const AttentionGeometry& geom) {
  return ResidualMixer(ResidualMixer(x, first, first_params, geom), second,
                       second_params, geom);
}

Tensor ParallelBlock(const Tensor& x, const LayerSpec& branch1,
                     const LayerSpec& branch2, const MergeWeights& merge,
                     const MixerParams& params, const AttentionGeometry& geom) {
  CheckInput(geom, x);
  const BranchSpec b1 = SingleBranch(branch1), b2 = SingleBranch(branch2);
  if (params.branches.size() != 2) {
    throw Error(ErrorCode::kDimension, "parallel block needs two branch weight sets");
  }
  Tensor xn = x;
  RmsNormInPlace(xn.data(), geom.d_model, 1e-6f, params.norm_gain.data());
  const Tensor merged = MergeBranches(
      {BranchForward(b1, params.branches[0], geom, xn),
       BranchForward(b2, params.branches[1], geom, xn)},
      merge);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += merged[i];
  return out;
}

}  // namespace spikelite
