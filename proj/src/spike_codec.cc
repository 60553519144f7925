// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/spike_codec.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace spikelite {
namespace {

std::int64_t Pow2(int e) { return std::int64_t{1} << e; }

void RequireBits(SpikeScheme scheme, int bits) {
  const int min_bits = scheme == SpikeScheme::kBitwiseBidir ? 2 : 1;
  if (bits < min_bits || bits > 30) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(SchemeName(scheme)) + " needs bits in [" +
                    std::to_string(min_bits) + ", 30], got " +
                    std::to_string(bits));
  }
}

// Inclusive count range a scheme can carry.
std::pair<std::int64_t, std::int64_t> SchemeRange(SpikeScheme scheme,
                                                  int bits) {
  constexpr std::int64_t kMax = std::numeric_limits<std::int32_t>::max();
  switch (scheme) {
    case SpikeScheme::kBinary: return {0, kMax};
    case SpikeScheme::kTernary: return {-kMax, kMax};
    case SpikeScheme::kBitwisePure: return {0, Pow2(bits) - 1};
    case SpikeScheme::kBitwiseBidir:
      return {-(Pow2(bits - 1) - 1), Pow2(bits - 1) - 1};
    case SpikeScheme::kBitwiseTwos:
      return {-Pow2(bits - 1), Pow2(bits - 1) - 1};
  }
  return {0, 0};
}

// Non-adjacent form of |c|, LSB first.
std::vector<int> NonAdjacentForm(std::int64_t c) {
  std::vector<int> digits;
  while (c != 0) {
    int d = 0;
    if (c & 1) {
      d = 2 - static_cast<int>(c & 3);
      c -= d;
    }
    digits.push_back(d);
    c /= 2;
  }
  return digits;
}

void EmitChannel(SpikeScheme scheme, std::int32_t c, std::size_t timesteps,
                 int bits, std::int8_t* out) {
  switch (scheme) {
    case SpikeScheme::kBinary:
    case SpikeScheme::kTernary: {
      const std::int8_t sign = c < 0 ? -1 : 1;
      const auto n = static_cast<std::size_t>(std::abs(static_cast<std::int64_t>(c)));
      for (std::size_t t = 0; t < n; ++t) out[t] = sign;
      break;
    }
    case SpikeScheme::kBitwisePure:
      for (int j = 0; j < bits; ++j) out[j] = static_cast<std::int8_t>((c >> j) & 1);
      break;
    case SpikeScheme::kBitwiseBidir: {
      const std::int64_t mag = std::abs(static_cast<std::int64_t>(c));
      const std::int8_t sign = c < 0 ? -1 : 1;
      std::vector<int> digits = NonAdjacentForm(mag);
      if (digits.size() > timesteps) {
        // NAF needs one digit more than the budget; plain magnitude bits fit.
        digits.clear();
        for (std::size_t j = 0; j < timesteps; ++j)
          digits.push_back(static_cast<int>((mag >> j) & 1));
      }
      for (std::size_t j = 0; j < digits.size(); ++j)
        out[j] = static_cast<std::int8_t>(sign * digits[j]);
      break;
    }
    case SpikeScheme::kBitwiseTwos: {
      const auto u = static_cast<std::uint64_t>(static_cast<std::int64_t>(c)) &
                     static_cast<std::uint64_t>(Pow2(bits) - 1);
      for (int j = 0; j < bits; ++j) out[j] = static_cast<std::int8_t>((u >> j) & 1);
      break;
    }
  }
}

}  // namespace

const char* GranularityName(Granularity g) {
  return g == Granularity::kPerTensor ? "per_tensor" : "per_token";
}

Granularity ParseGranularity(std::string_view name) {
  if (name == "per_token") return Granularity::kPerToken;
  if (name == "per_tensor") return Granularity::kPerTensor;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown granularity '" + std::string(name) + "'");
}

const char* SchemeName(SpikeScheme scheme) {
  switch (scheme) {
    case SpikeScheme::kBinary: return "binary";
    case SpikeScheme::kTernary: return "ternary";
    case SpikeScheme::kBitwisePure: return "bitwise_pure";
    case SpikeScheme::kBitwiseBidir: return "bitwise_bidir";
    case SpikeScheme::kBitwiseTwos: return "bitwise_twos";
  }
  return "unknown";
}

SpikeScheme ParseScheme(std::string_view name) {
  for (SpikeScheme s :
       {SpikeScheme::kBinary, SpikeScheme::kTernary, SpikeScheme::kBitwisePure,
        SpikeScheme::kBitwiseBidir, SpikeScheme::kBitwiseTwos}) {
    if (name == SchemeName(s)) return s;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown spike scheme '" + std::string(name) + "'");
}

bool IsBitwise(SpikeScheme scheme) {
  return scheme == SpikeScheme::kBitwisePure ||
         scheme == SpikeScheme::kBitwiseBidir ||
         scheme == SpikeScheme::kBitwiseTwos;
}

Tensor SpikeCountTensor::Reconstruct() const {
  Tensor out(shape);
  const std::size_t width = channels();
  for (std::size_t i = 0; i < counts.size(); ++i)
    out[i] = threshold_for_token(i / width) * static_cast<float>(counts[i]);
  return out;
}

Tensor AdaptiveThreshold(const Tensor& x, float k, Granularity granularity) {
  if (!(k > 0.0f) || !std::isfinite(k)) {
    throw Error(ErrorCode::kInvalidArgument,
                "threshold k must be positive, got " + std::to_string(k));
  }
  x.RequireFinite("activation");
  if (x.empty()) throw Error(ErrorCode::kEmptyInput, "empty activation");
  const std::size_t width =
      granularity == Granularity::kPerTensor ? x.size() : x.shape().back();
  if (width == 0) throw Error(ErrorCode::kEmptyInput, "zero-width activation");
  const std::size_t groups = x.size() / width;
  Tensor v_th({groups});
  for (std::size_t g = 0; g < groups; ++g) {
    double sum = 0.0;
    for (std::size_t i = 0; i < width; ++i) sum += std::abs(x[g * width + i]);
    const double mean = sum / static_cast<double>(width);
    v_th[g] = mean > 0.0 ? static_cast<float>(mean / k) : kZeroThreshold;
  }
  return v_th;
}

SpikeCountTensor EncodeCounts(const Tensor& x, const Tensor& v_th, float k) {
  x.RequireFinite("activation");
  SpikeCountTensor out;
  out.shape = x.shape();
  out.k = k;
  out.v_th = v_th;
  const std::size_t width = out.channels();
  if (width == 0 || (v_th.size() != 1 && v_th.size() != x.size() / width)) {
    throw Error(ErrorCode::kDimension,
                "threshold " + ShapeString(v_th.shape()) +
                    " does not broadcast over activation " +
                    ShapeString(x.shape()));
  }
  for (float t : v_th.data()) {
    if (!(t > 0.0f) || !std::isfinite(t)) {
      throw Error(ErrorCode::kDomain, "threshold must be positive and finite");
    }
  }
  out.counts.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ratio = static_cast<double>(x[i]) /
                         static_cast<double>(out.threshold_for_token(i / width));
    const double c = std::round(ratio);  // halves go away from zero
    if (std::abs(c) > std::numeric_limits<std::int32_t>::max()) {
      throw Error(ErrorCode::kOverflow, "spike count exceeds int32 range");
    }
    out.counts[i] = static_cast<std::int32_t>(c);
  }
  return out;
}

SpikeCountTensor SpikeEncode(const Tensor& x, float k,
                             Granularity granularity) {
  return EncodeCounts(x, AdaptiveThreshold(x, k, granularity), k);
}

void NeuronParams::Validate() const {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "membrane decay must lie in (0, 1]");
  }
}

std::vector<int> LifRun(std::span<const double> inputs, double v_th,
                        const NeuronParams& params) {
  params.Validate();
  if (!(v_th > 0.0)) {
    throw Error(ErrorCode::kDomain, "firing threshold must be positive");
  }
  std::vector<int> spikes(inputs.size(), 0);
  if (inputs.empty()) return spikes;
  double v = inputs[0];
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const int s = v >= v_th ? 1 : 0;
    spikes[t] = s;
    const double next = t + 1 < inputs.size() ? inputs[t + 1] : 0.0;
    if (params.reset == ResetMode::kSoft) {
      v = params.lambda * v - v_th * s + next;
    } else {
      v = params.lambda * (1 - s) * v + params.v_reset * s + next;
    }
  }
  return spikes;
}

std::int64_t IfSimulate(double x, double v_th, int timesteps,
                        const NeuronParams& params) {
  if (timesteps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "simulation needs T >= 1");
  }
  std::vector<double> inputs(static_cast<std::size_t>(timesteps), 0.0);
  inputs[0] = std::abs(x) + 0.5 * v_th;
  std::int64_t total = 0;
  for (int s : LifRun(inputs, v_th, params)) total += s;
  return x < 0.0 ? -total : total;
}

std::size_t SpikeTrain::NonZeroEvents() const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(),
                    [](std::int8_t e) { return e != 0; }));
}

std::size_t SchemeTimesteps(SpikeScheme scheme,
                            std::span<const std::int32_t> counts, int bits) {
  switch (scheme) {
    case SpikeScheme::kBinary:
    case SpikeScheme::kTernary: {
      std::int64_t mx = 0;
      for (std::int32_t c : counts)
        mx = std::max(mx, std::abs(static_cast<std::int64_t>(c)));
      return static_cast<std::size_t>(mx);
    }
    case SpikeScheme::kBitwisePure:
    case SpikeScheme::kBitwiseTwos:
      return static_cast<std::size_t>(bits);
    case SpikeScheme::kBitwiseBidir:
      return static_cast<std::size_t>(bits - 1);
  }
  return 0;
}

SpikeTrain ExpandCounts(std::span<const std::int32_t> counts,
                        std::size_t channels, SpikeScheme scheme,
                        std::optional<int> bits) {
  if (channels == 0 || counts.size() % channels != 0) {
    throw Error(ErrorCode::kDimension, "counts do not tile into channels");
  }
  SpikeTrain train;
  train.scheme = scheme;
  train.channels = channels;
  train.tokens = counts.size() / channels;
  const int width = bits.value_or(kDefaultBits);
  if (IsBitwise(scheme)) {
    RequireBits(scheme, width);
    train.bits = width;
  }
  const auto [lo, hi] = SchemeRange(scheme, width);
  for (std::int32_t c : counts) {
    if (c < lo || c > hi) {
      const bool sign_violation = c < 0 && lo == 0;
      throw Error(sign_violation ? ErrorCode::kDomain : ErrorCode::kOverflow,
                  "count " + std::to_string(c) + " not representable under " +
                      SchemeName(scheme) +
                      (IsBitwise(scheme) ? " with " + std::to_string(width) +
                                               " bits"
                                         : std::string()));
    }
  }
  train.timesteps = SchemeTimesteps(scheme, counts, width);
  train.events.assign(counts.size() * train.timesteps, 0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    EmitChannel(scheme, counts[i], train.timesteps, width,
                train.events.data() + i * train.timesteps);
  return train;
}

SpikeTrain Expand(const SpikeCountTensor& counts, SpikeScheme scheme,
                  std::optional<int> bits) {
  return ExpandCounts(counts.counts, counts.channels(), scheme, bits);
}

std::vector<std::int32_t> Collapse(const SpikeTrain& train) {
  const std::size_t n = train.tokens * train.channels;
  if (train.events.size() != n * train.timesteps) {
    throw Error(ErrorCode::kDimension, "spike train event buffer size mismatch");
  }
  const bool signed_events = train.scheme == SpikeScheme::kTernary ||
                             train.scheme == SpikeScheme::kBitwiseBidir;
  const bool positional = IsBitwise(train.scheme);
  if (positional && !train.bits) {
    throw Error(ErrorCode::kFormat, "bitwise train without a bit width");
  }
  std::vector<std::int32_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t acc = 0;
    for (std::size_t t = 0; t < train.timesteps; ++t) {
      const int e = train.events[i * train.timesteps + t];
      if (e < (signed_events ? -1 : 0) || e > 1) {
        throw Error(ErrorCode::kDomain,
                    "event " + std::to_string(e) + " invalid for " +
                        SchemeName(train.scheme));
      }
      std::int64_t weight = positional ? Pow2(static_cast<int>(t)) : 1;
      if (train.scheme == SpikeScheme::kBitwiseTwos &&
          t + 1 == train.timesteps) {
        weight = -weight;
      }
      acc += weight * e;
    }
    counts[i] = static_cast<std::int32_t>(acc);
  }
  return counts;
}

Tensor SpikeProject(const Tensor& w, const SpikeCountTensor& counts) {
  const std::size_t channels = counts.channels();
  if (w.rank() != 2 || w.dim(1) != channels) {
    throw Error(ErrorCode::kDimension,
                "projection " + ShapeString(w.shape()) + " vs counts " +
                    ShapeString(counts.shape));
  }
  const std::size_t out_dim = w.dim(0), tokens = counts.tokens();
  Tensor y({tokens, out_dim});
  for (std::size_t t = 0; t < tokens; ++t) {
    const std::int32_t* c = counts.counts.data() + t * channels;
    for (std::size_t o = 0; o < out_dim; ++o) {
      std::span<const float> row = w.slice({o});
      double acc = 0.0;
      for (std::size_t i = 0; i < channels; ++i)
        if (c[i] != 0) acc += static_cast<double>(row[i]) * c[i];
      y.at(t, o) = static_cast<float>(counts.threshold_for_token(t) * acc);
    }
  }
  return y;
}

Tensor SpikeProjectEvents(const Tensor& w, const SpikeTrain& train,
                          const Tensor& v_th) {
  if (w.rank() != 2 || w.dim(1) != train.channels) {
    throw Error(ErrorCode::kDimension,
                "projection " + ShapeString(w.shape()) + " vs " +
                    std::to_string(train.channels) + " spike channels");
  }
  if (v_th.size() != 1 && v_th.size() != train.tokens) {
    throw Error(ErrorCode::kDimension, "thresholds do not match spike tokens");
  }
  const std::size_t out_dim = w.dim(0);
  Tensor y({train.tokens, out_dim});
  std::vector<double> acc(out_dim), step(out_dim);
  for (std::size_t tok = 0; tok < train.tokens; ++tok) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < train.timesteps; ++t) {
      // W s_t: only the channels that fire contribute, by addition.
      std::fill(step.begin(), step.end(), 0.0);
      for (std::size_t ch = 0; ch < train.channels; ++ch) {
        const int e = train.events[(tok * train.channels + ch) * train.timesteps + t];
        if (e == 0) continue;
        for (std::size_t o = 0; o < out_dim; ++o)
          step[o] += e > 0 ? w.at(o, ch) : -w.at(o, ch);
      }
      double weight = IsBitwise(train.scheme) ? std::ldexp(1.0, static_cast<int>(t)) : 1.0;
      if (train.scheme == SpikeScheme::kBitwiseTwos && t + 1 == train.timesteps)
        weight = -weight;
      for (std::size_t o = 0; o < out_dim; ++o) acc[o] += weight * step[o];
    }
    const float scale = v_th.size() == 1 ? v_th[0] : v_th[tok];
    for (std::size_t o = 0; o < out_dim; ++o)
      y.at(tok, o) = static_cast<float>(scale * acc[o]);
  }
  return y;
}

}  // namespace spikelite
