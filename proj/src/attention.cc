// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/attention.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace spikelite {
namespace {

constexpr float kNormEps = 1e-6f;

void RequireStepShapes(const Tensor& q_t, const Tensor& k_t, const Tensor& v_t,
                       const RecurrentState& state) {
  const Shape& s = state.s.shape();
  if (q_t.rank() != 2 || k_t.shape() != q_t.shape() || v_t.rank() != 2 ||
      s.size() != 3 || s[0] != q_t.dim(0) || s[1] != q_t.dim(1) ||
      s[2] != v_t.dim(1) || v_t.dim(0) != q_t.dim(0)) {
    throw Error(ErrorCode::kDimension,
                "recurrent step: q " + ShapeString(q_t.shape()) + ", k " +
                    ShapeString(k_t.shape()) + ", v " +
                    ShapeString(v_t.shape()) + " vs state " + ShapeString(s));
  }
}

void RequireGateRange(std::span<const float> g) {
  for (float x : g) {
    if (!(x >= 0.0f && x <= 1.0f)) {
      throw Error(ErrorCode::kDomain,
                  "gate value " + std::to_string(x) + " outside [0, 1]");
    }
  }
}

void RequireNormalizer(const RecurrentState& state, OutputNorm norm) {
  if (norm == OutputNorm::kSum && !state.normalizer) {
    throw Error(ErrorCode::kInvalidArgument,
                "sum normalization needs a state with a normalizer");
  }
}

// Finishes one head's output row in place given the accumulated denominator.
void FinishRow(std::span<float> o, OutputNorm norm, float den) {
  switch (norm) {
    case OutputNorm::kNone:
      break;
    case OutputNorm::kRms:
      RmsNormInPlace(o, o.size(), kNormEps);
      break;
    case OutputNorm::kSum: {
      const float inv = 1.0f / std::max(den, kNormEps);
      for (float& x : o) x *= inv;
      break;
    }
  }
}

float Dot(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Causal softmax where row t attends to keys [lo(t), hi(t)].
template <typename Range>
Tensor SoftmaxOverRanges(const AttentionInputs& in, Range range) {
  const std::size_t heads = in.heads(), n = in.seq();
  const std::size_t dk = in.d_k(), dv = in.d_v();
  Tensor out({heads, n, dv});
  for (std::size_t h = 0; h < heads; ++h) {
    std::span<const float> keys = in.k.slice({h});
    std::span<const float> values = in.v.slice({h});
    for (std::size_t t = 0; t < n; ++t) {
      const auto [lo, hi] = range(t);
      const std::size_t m = hi - lo + 1;
      SoftmaxRead(in.q.slice({h, t}), keys.subspan(lo * dk, m * dk),
                  values.subspan(lo * dv, m * dv), out.slice({h, t}));
    }
  }
  return out;
}

}  // namespace

const char* OutputNormName(OutputNorm norm) {
  switch (norm) {
    case OutputNorm::kNone: return "none";
    case OutputNorm::kRms: return "rms";
    case OutputNorm::kSum: return "sum";
  }
  return "none";
}

OutputNorm ParseOutputNorm(std::string_view name) {
  if (name == "none") return OutputNorm::kNone;
  if (name == "rms") return OutputNorm::kRms;
  if (name == "sum") return OutputNorm::kSum;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown output norm '" + std::string(name) + "'");
}

void AttentionInputs::Validate() const {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw Error(ErrorCode::kDimension,
                "attention inputs must be [heads, seq, d]");
  }
  if (k.shape() != q.shape() || v.dim(0) != q.dim(0) || v.dim(1) != q.dim(1)) {
    throw Error(ErrorCode::kDimension,
                "attention inputs disagree: q " + ShapeString(q.shape()) +
                    ", k " + ShapeString(k.shape()) + ", v " +
                    ShapeString(v.shape()));
  }
  if (q.dim(1) == 0) {
    throw Error(ErrorCode::kEmptyInput, "attention over an empty sequence");
  }
}

RecurrentState RecurrentState::Zeros(std::size_t heads, std::size_t d_k,
                                     std::size_t d_v, bool with_normalizer) {
  RecurrentState state{Tensor({heads, d_k, d_v}), std::nullopt};
  if (with_normalizer) state.normalizer = Tensor({heads, d_k});
  return state;
}

std::size_t RecurrentState::bytes() const {
  std::size_t n = s.size();
  if (normalizer) n += normalizer->size();
  return n * sizeof(float);
}

void GateVector::Validate() const { RequireGateRange(g.data()); }

void SoftmaxRead(std::span<const float> q, std::span<const float> keys,
                 std::span<const float> values, std::span<float> out) {
  const std::size_t dk = q.size(), dv = out.size();
  const std::size_t m = keys.size() / dk;
  // Double accumulation keeps large logits from costing float precision.
  std::vector<double> scores(m), acc(dv, 0.0);
  double max_score = -INFINITY;
  for (std::size_t j = 0; j < m; ++j) {
    const float* kj = keys.data() + j * dk;
    double dot = 0.0;
    for (std::size_t a = 0; a < dk; ++a) dot += static_cast<double>(q[a]) * kj[a];
    scores[j] = dot;
    max_score = std::max(max_score, dot);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    scores[j] = std::exp(scores[j] - max_score);
    denom += scores[j];
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double p = scores[j] / denom;
    const float* vj = values.data() + j * dv;
    for (std::size_t c = 0; c < dv; ++c) acc[c] += p * vj[c];
  }
  for (std::size_t c = 0; c < dv; ++c) out[c] = static_cast<float>(acc[c]);
}

Tensor SoftmaxAttention(const AttentionInputs& in, std::size_t sink_count) {
  in.Validate();
  if (sink_count > in.seq()) {
    throw Error(ErrorCode::kInvalidArgument,
                "sink count " + std::to_string(sink_count) +
                    " exceeds sequence length " + std::to_string(in.seq()));
  }
  // Sink rows see the whole sink block; other rows are causal over
  // everything before them, sinks included.
  return SoftmaxOverRanges(in, [sink_count](std::size_t t) {
    if (t < sink_count) return std::pair<std::size_t, std::size_t>{0, sink_count - 1};
    return std::pair<std::size_t, std::size_t>{0, t};
  });
}

Tensor SlidingWindowAttention(const AttentionInputs& in, std::size_t window) {
  if (window == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sliding window must be >= 1");
  }
  in.Validate();
  return SoftmaxOverRanges(in, [window](std::size_t t) {
    const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
    return std::pair<std::size_t, std::size_t>{lo, t};
  });
}

Tensor LinearAttentionParallel(const AttentionInputs& in, OutputNorm norm) {
  in.Validate();
  const std::size_t heads = in.heads(), n = in.seq(), dv = in.d_v();
  Tensor out({heads, n, dv});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < n; ++t) {
      std::span<const float> q = in.q.slice({h, t});
      std::span<float> o = out.slice({h, t});
      float den = 0.0f;
      for (std::size_t s = 0; s <= t; ++s) {
        const float a = Dot(q, in.k.slice({h, s}));
        den += a;
        std::span<const float> v = in.v.slice({h, s});
        for (std::size_t c = 0; c < dv; ++c) o[c] += a * v[c];
      }
      FinishRow(o, norm, den);
    }
  }
  return out;
}

Tensor LinearAttentionStep(const Tensor& q_t, const Tensor& k_t,
                           const Tensor& v_t, RecurrentState& state,
                           OutputNorm norm) {
  RequireStepShapes(q_t, k_t, v_t, state);
  RequireNormalizer(state, norm);
  const std::size_t heads = q_t.dim(0), dk = q_t.dim(1), dv = v_t.dim(1);
  Tensor out({heads, dv});
  for (std::size_t h = 0; h < heads; ++h) {
    std::span<const float> q = q_t.slice({h}), k = k_t.slice({h}),
                           v = v_t.slice({h});
    std::span<float> s = state.s.slice({h});
    for (std::size_t m = 0; m < dk; ++m)
      for (std::size_t c = 0; c < dv; ++c) s[m * dv + c] += k[m] * v[c];
    std::span<float> o = out.slice({h});
    for (std::size_t m = 0; m < dk; ++m)
      for (std::size_t c = 0; c < dv; ++c) o[c] += q[m] * s[m * dv + c];
    float den = 0.0f;
    if (state.normalizer) {
      std::span<float> z = state.normalizer->slice({h});
      for (std::size_t m = 0; m < dk; ++m) {
        z[m] += k[m];
        den += q[m] * z[m];
      }
    }
    FinishRow(o, norm, den);
  }
  return out;
}

Tensor GlaStep(const Tensor& q_t, const Tensor& k_t, const Tensor& v_t,
               const Tensor& g_t, RecurrentState& state, OutputNorm norm) {
  RequireStepShapes(q_t, k_t, v_t, state);
  RequireNormalizer(state, norm);
  if (g_t.shape() != k_t.shape()) {
    throw Error(ErrorCode::kDimension, "gate " + ShapeString(g_t.shape()) +
                                           " vs key " +
                                           ShapeString(k_t.shape()));
  }
  RequireGateRange(g_t.data());
  const std::size_t heads = q_t.dim(0), dk = q_t.dim(1), dv = v_t.dim(1);
  Tensor out({heads, dv});
  for (std::size_t h = 0; h < heads; ++h) {
    std::span<const float> q = q_t.slice({h}), k = k_t.slice({h}),
                           v = v_t.slice({h}), g = g_t.slice({h});
    std::span<float> s = state.s.slice({h});
    // Decay first, then write.
    for (std::size_t m = 0; m < dk; ++m)
      for (std::size_t c = 0; c < dv; ++c)
        s[m * dv + c] = g[m] * s[m * dv + c] + k[m] * v[c];
    std::span<float> o = out.slice({h});
    for (std::size_t m = 0; m < dk; ++m)
      for (std::size_t c = 0; c < dv; ++c) o[c] += q[m] * s[m * dv + c];
    float den = 0.0f;
    if (state.normalizer) {
      std::span<float> z = state.normalizer->slice({h});
      for (std::size_t m = 0; m < dk; ++m) {
        z[m] = g[m] * z[m] + k[m];
        den += q[m] * z[m];
      }
    }
    FinishRow(o, norm, den);
  }
  return out;
}

namespace {

// Copies token t of every head out of a [heads, seq, d] tensor.
Tensor TokenSlice(const Tensor& x, std::size_t t) {
  const std::size_t heads = x.dim(0), d = x.dim(2);
  Tensor out({heads, d});
  for (std::size_t h = 0; h < heads; ++h) {
    std::span<const float> src = x.slice({h, t});
    std::copy(src.begin(), src.end(), out.slice({h}).begin());
  }
  return out;
}

void StoreToken(Tensor& dst, std::size_t t, const Tensor& row) {
  for (std::size_t h = 0; h < dst.dim(0); ++h) {
    std::span<const float> src = row.slice({h});
    std::copy(src.begin(), src.end(), dst.slice({h, t}).begin());
  }
}

RecurrentState& EnsureState(const AttentionInputs& in, OutputNorm norm,
                            RecurrentState* state, RecurrentState& local) {
  if (state == nullptr) {
    local = RecurrentState::Zeros(in.heads(), in.d_k(), in.d_v(),
                                  norm == OutputNorm::kSum);
    return local;
  }
  const Shape want{in.heads(), in.d_k(), in.d_v()};
  if (state->s.shape() != want) {
    throw Error(ErrorCode::kDimension, "recurrent state " +
                                           ShapeString(state->s.shape()) +
                                           " vs inputs " + ShapeString(want));
  }
  if (norm == OutputNorm::kSum && !state->normalizer)
    state->normalizer = Tensor({in.heads(), in.d_k()});
  return *state;
}

void RequireGateShape(const AttentionInputs& in, const GateVector& gate) {
  if (gate.g.shape() != in.k.shape()) {
    throw Error(ErrorCode::kDimension, "gate " + ShapeString(gate.g.shape()) +
                                           " vs keys " +
                                           ShapeString(in.k.shape()));
  }
  gate.Validate();
}

}  // namespace

Tensor LinearAttentionRecurrent(const AttentionInputs& in, OutputNorm norm,
                                RecurrentState* state) {
  in.Validate();
  RecurrentState local;
  RecurrentState& st = EnsureState(in, norm, state, local);
  Tensor out({in.heads(), in.seq(), in.d_v()});
  for (std::size_t t = 0; t < in.seq(); ++t) {
    StoreToken(out, t,
               LinearAttentionStep(TokenSlice(in.q, t), TokenSlice(in.k, t),
                                   TokenSlice(in.v, t), st, norm));
  }
  return out;
}

Tensor GlaRecurrent(const AttentionInputs& in, const GateVector& gate,
                    OutputNorm norm, RecurrentState* state) {
  in.Validate();
  RequireGateShape(in, gate);
  RecurrentState local;
  RecurrentState& st = EnsureState(in, norm, state, local);
  Tensor out({in.heads(), in.seq(), in.d_v()});
  for (std::size_t t = 0; t < in.seq(); ++t) {
    StoreToken(out, t,
               GlaStep(TokenSlice(in.q, t), TokenSlice(in.k, t),
                       TokenSlice(in.v, t), TokenSlice(gate.g, t), st, norm));
  }
  return out;
}

Tensor GlaParallel(const AttentionInputs& in, const GateVector& gate,
                   OutputNorm norm) {
  in.Validate();
  RequireGateShape(in, gate);
  const std::size_t heads = in.heads(), n = in.seq();
  const std::size_t dk = in.d_k(), dv = in.d_v();
  Tensor out({heads, n, dv});
  std::vector<float> decay(dk);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < n; ++t) {
      std::span<const float> q = in.q.slice({h, t});
      std::span<float> o = out.slice({h, t});
      std::fill(decay.begin(), decay.end(), 1.0f);
      float den = 0.0f;
      for (std::size_t s = t + 1; s-- > 0;) {
        std::span<const float> k = in.k.slice({h, s});
        float a = 0.0f;
        for (std::size_t m = 0; m < dk; ++m) a += q[m] * decay[m] * k[m];
        den += a;
        std::span<const float> v = in.v.slice({h, s});
        for (std::size_t c = 0; c < dv; ++c) o[c] += a * v[c];
        std::span<const float> g = gate.g.slice({h, s});
        for (std::size_t m = 0; m < dk; ++m) decay[m] *= g[m];
      }
      FinishRow(o, norm, den);
    }
  }
  return out;
}

Tensor GlaChunkwise(const AttentionInputs& in, const GateVector& gate,
                    std::size_t chunk, OutputNorm norm,
                    RecurrentState* state) {
  if (chunk == 0) {
    throw Error(ErrorCode::kInvalidArgument, "chunk size must be >= 1");
  }
  in.Validate();
  RequireGateShape(in, gate);
  RecurrentState local;
  RecurrentState& st = EnsureState(in, norm, state, local);
  const bool track_den = st.normalizer.has_value();

  const std::size_t heads = in.heads(), n = in.seq();
  const std::size_t dk = in.d_k(), dv = in.d_v();
  Tensor out({heads, n, dv});
  std::vector<float> decay(dk), qcum(dk), next_s(dk * dv), next_z(dk);

  for (std::size_t h = 0; h < heads; ++h) {
    std::span<float> s = st.s.slice({h});
    std::span<float> z =
        track_den ? st.normalizer->slice({h}) : std::span<float>{};
    for (std::size_t b0 = 0; b0 < n; b0 += chunk) {
      const std::size_t b1 = std::min(n, b0 + chunk);

      // Outputs: carried state read through the cumulative in-block decay,
      // plus intra-block pairs.
      for (std::size_t t = b0; t < b1; ++t) {
        std::span<const float> q = in.q.slice({h, t});
        std::span<float> o = out.slice({h, t});
        std::fill(decay.begin(), decay.end(), 1.0f);
        float den = 0.0f;
        for (std::size_t j = t + 1; j-- > b0;) {
          std::span<const float> k = in.k.slice({h, j});
          float a = 0.0f;
          for (std::size_t m = 0; m < dk; ++m) a += q[m] * decay[m] * k[m];
          den += a;
          std::span<const float> v = in.v.slice({h, j});
          for (std::size_t c = 0; c < dv; ++c) o[c] += a * v[c];
          std::span<const float> g = gate.g.slice({h, j});
          for (std::size_t m = 0; m < dk; ++m) decay[m] *= g[m];
        }
        for (std::size_t m = 0; m < dk; ++m) qcum[m] = q[m] * decay[m];
        for (std::size_t m = 0; m < dk; ++m) {
          if (qcum[m] == 0.0f) continue;
          for (std::size_t c = 0; c < dv; ++c) o[c] += qcum[m] * s[m * dv + c];
          if (track_den) den += qcum[m] * z[m];
        }
        FinishRow(o, norm, den);
      }

      // State hand-off: S <- diag(prod g) S + sum_j diag(tail_j) k_j^T v_j.
      std::fill(decay.begin(), decay.end(), 1.0f);
      std::fill(next_s.begin(), next_s.end(), 0.0f);
      std::fill(next_z.begin(), next_z.end(), 0.0f);
      for (std::size_t j = b1; j-- > b0;) {
        std::span<const float> k = in.k.slice({h, j});
        std::span<const float> v = in.v.slice({h, j});
        for (std::size_t m = 0; m < dk; ++m) {
          const float w = decay[m] * k[m];
          for (std::size_t c = 0; c < dv; ++c) next_s[m * dv + c] += w * v[c];
          next_z[m] += w;
        }
        std::span<const float> g = gate.g.slice({h, j});
        for (std::size_t m = 0; m < dk; ++m) decay[m] *= g[m];
      }
      for (std::size_t m = 0; m < dk; ++m) {
        for (std::size_t c = 0; c < dv; ++c)
          s[m * dv + c] = decay[m] * s[m * dv + c] + next_s[m * dv + c];
        if (track_den) z[m] = decay[m] * z[m] + next_z[m];
      }
    }
  }
  return out;
}

GateVector KeyTiedGate(const Tensor& k) {
  for (float x : k.data()) {
    if (!(x >= 0.0f && x <= 1.0f)) {
      throw Error(ErrorCode::kDomain,
                  "key-tied gate needs keys in [0, 1], got " +
                      std::to_string(x));
    }
  }
  Tensor g(k.shape());
  for (std::size_t i = 0; i < k.size(); ++i) g[i] = 1.0f - k[i];
  return GateVector{std::move(g)};
}

AttentionMap BuildAttentionMap(const AttentionInputs& in, MapKind kind,
                               std::optional<std::size_t> window,
                               std::size_t sink_count) {
  in.Validate();
  if (kind == MapKind::kWindowed && !window) {
    throw Error(ErrorCode::kInvalidArgument, "windowed map needs a window");
  }
  if (kind == MapKind::kWindowed && *window == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sliding window must be >= 1");
  }
  if (sink_count > in.seq()) {
    throw Error(ErrorCode::kInvalidArgument, "sink count exceeds sequence");
  }
  const std::size_t heads = in.heads(), n = in.seq();
  Tensor a({heads, n, n});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t t = 0; t < n; ++t) {
      std::span<const float> q = in.q.slice({h, t});
      std::span<float> row = a.slice({h, t});
      if (kind == MapKind::kLinear) {
        // The unmasked kernel Q K^T; the causal mask is applied on use.
        for (std::size_t s = 0; s < n; ++s) row[s] = Dot(q, in.k.slice({h, s}));
        continue;
      }
      std::size_t lo = 0, hi = t;
      if (kind == MapKind::kWindowed) {
        lo = t + 1 >= *window ? t + 1 - *window : 0;
      } else if (t < sink_count) {
        hi = sink_count - 1;
      }
      float max_score = -INFINITY;
      for (std::size_t s = lo; s <= hi; ++s) {
        row[s] = Dot(q, in.k.slice({h, s}));
        max_score = std::max(max_score, row[s]);
      }
      float denom = 0.0f;
      for (std::size_t s = lo; s <= hi; ++s) {
        row[s] = std::exp(row[s] - max_score);
        denom += row[s];
      }
      for (std::size_t s = lo; s <= hi; ++s) row[s] /= denom;
    }
  }
  return AttentionMap{std::move(a), kind};
}

Tensor ApplyAttentionMap(const AttentionMap& map, const Tensor& v) {
  const std::size_t heads = map.a.dim(0), n = map.a.dim(1);
  if (v.rank() != 3 || v.dim(0) != heads || v.dim(1) != n) {
    throw Error(ErrorCode::kDimension, "map " + ShapeString(map.a.shape()) +
                                           " vs values " +
                                           ShapeString(v.shape()));
  }
  const std::size_t dv = v.dim(2);
  Tensor out({heads, n, dv});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t t = 0; t < n; ++t) {
      std::span<float> o = out.slice({h, t});
      std::span<const float> row = map.a.slice({h, t});
      const std::size_t end = map.kind == MapKind::kLinear ? t + 1 : n;
      for (std::size_t s = 0; s < end; ++s) {
        if (row[s] == 0.0f) continue;
        std::span<const float> vs = v.slice({h, s});
        for (std::size_t c = 0; c < dv; ++c) o[c] += row[s] * vs[c];
      }
    }
  return out;
}

}  // namespace spikelite
