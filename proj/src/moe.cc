// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/moe.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace spikelite {
namespace {

float Activate(Activation act, float x) {
  switch (act) {
    case Activation::kSilu: return x / (1.0f + std::exp(-x));
    case Activation::kRelu: return x > 0.0f ? x : 0.0f;
  }
  return x;
}

void Apply(const MatVecFn& matvec, const Tensor& w, std::span<const float> x,
           std::span<float> y) {
  if (matvec) {
    matvec(w, x, y);
  } else {
    MatVec(w, x, y);
  }
}

DenseFFN Scaled(const DenseFFN& src, float factor) {
  DenseFFN out = src;
  for (Tensor* w : {&out.w_gate, &out.w_up, &out.w_down})
    for (float& x : w->data()) x *= factor;
  return out;
}

}  // namespace

const char* ActivationName(Activation act) {
  return act == Activation::kRelu ? "relu" : "silu";
}

Activation ParseActivation(std::string_view name) {
  if (name == "silu") return Activation::kSilu;
  if (name == "relu") return Activation::kRelu;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown activation '" + std::string(name) + "'");
}

const char* RouterFnName(RouterFn fn) {
  return fn == RouterFn::kSigmoid ? "sigmoid" : "softmax";
}

RouterFn ParseRouterFn(std::string_view name) {
  if (name == "softmax") return RouterFn::kSoftmax;
  if (name == "sigmoid") return RouterFn::kSigmoid;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown router function '" + std::string(name) + "'");
}

void DenseFFN::Validate() const {
  if (w_gate.rank() != 2 || w_up.shape() != w_gate.shape() ||
      w_down.rank() != 2 || w_down.dim(0) != w_gate.dim(1) ||
      w_down.dim(1) != w_gate.dim(0)) {
    throw Error(ErrorCode::kDimension,
                "ffn weights disagree: gate " + ShapeString(w_gate.shape()) +
                    ", up " + ShapeString(w_up.shape()) + ", down " +
                    ShapeString(w_down.shape()));
  }
}

std::vector<float> FfnForward(const DenseFFN& ffn, std::span<const float> x,
                              const MatVecFn& matvec) {
  std::vector<float> gate(ffn.d_ff()), up(ffn.d_ff()), y(ffn.d_model());
  Apply(matvec, ffn.w_gate, x, gate);
  Apply(matvec, ffn.w_up, x, up);
  for (std::size_t i = 0; i < gate.size(); ++i)
    gate[i] = Activate(ffn.activation, gate[i]) * up[i];
  Apply(matvec, ffn.w_down, gate, y);
  return y;
}

void MoELayer::Validate() const {
  if (experts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "moe layer without experts");
  }
  if (top_k < 1 || top_k > experts.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "top_k " + std::to_string(top_k) + " outside [1, " +
                    std::to_string(experts.size()) + "]");
  }
  if (router_w.rank() != 2 || router_w.dim(0) != experts.size() ||
      router_w.dim(1) != experts.front().d_model()) {
    throw Error(ErrorCode::kDimension,
                "router " + ShapeString(router_w.shape()) + " for " +
                    std::to_string(experts.size()) + " experts");
  }
}

RoutingDecision Route(std::span<const float> x, const MoELayer& layer) {
  layer.Validate();
  const std::size_t n = layer.num_experts();
  RoutingDecision d;
  d.probs.resize(n);
  MatVec(layer.router_w, x, d.probs);
  if (layer.sigma == RouterFn::kSoftmax) {
    const float mx = *std::max_element(d.probs.begin(), d.probs.end());
    float sum = 0.0f;
    for (float& p : d.probs) {
      p = std::exp(p - mx);
      sum += p;
    }
    for (float& p : d.probs) p /= sum;
  } else {
    for (float& p : d.probs) p = 1.0f / (1.0f + std::exp(-p));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return d.probs[a] > d.probs[b];
                   });
  d.indices.assign(order.begin(), order.begin() + layer.top_k);
  return d;
}

std::vector<float> MoeForward(std::span<const float> x, const MoELayer& layer,
                              const MatVecFn& matvec,
                              RoutingDecision* decision) {
  RoutingDecision d = Route(x, layer);
  std::vector<float> y(layer.experts.front().d_model(), 0.0f);
  for (std::size_t i : d.indices) {
    const std::vector<float> e = FfnForward(layer.experts[i], x, matvec);
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += d.probs[i] * e[c];
  }
  for (const DenseFFN& s : layer.shared) {
    const std::vector<float> e = FfnForward(s, x, matvec);
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += e[c];
  }
  if (decision) *decision = std::move(d);
  return y;
}

double ScalingFactor(std::size_t num_experts, std::size_t top_k,
                     std::size_t num_shared) {
  if (num_experts == 0 || top_k > num_experts) {
    throw Error(ErrorCode::kInvalidArgument,
                "scaling factor needs N >= 1 and k <= N");
  }
  const double mass = static_cast<double>(num_shared) +
                      static_cast<double>(top_k) / num_experts;
  if (mass <= 0.0) {
    throw Error(ErrorCode::kDomain, "S + k/N must be positive");
  }
  return std::cbrt(1.0 / mass);
}

MoELayer Upcycle(const DenseFFN& dense, std::size_t num_experts,
                 std::size_t top_k, std::size_t num_shared, std::uint64_t seed,
                 RouterFn sigma) {
  dense.Validate();
  const auto factor =
      static_cast<float>(ScalingFactor(num_experts, top_k, num_shared));
  const DenseFFN expert = Scaled(dense, factor);

  MoELayer layer;
  layer.experts.assign(num_experts, expert);
  layer.shared.assign(num_shared, expert);
  layer.top_k = top_k;
  layer.sigma = sigma;
  layer.router_w = Tensor({num_experts, dense.d_model()});
  const float bound = 1.0f / std::sqrt(static_cast<float>(dense.d_model()));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& w : layer.router_w.data()) w = dist(rng);
  layer.Validate();
  return layer;
}

double LoadBalanceMetric(std::span<const RoutingDecision> decisions,
                         std::size_t num_experts) {
  if (decisions.empty()) {
    throw Error(ErrorCode::kEmptyInput, "load balance over zero tokens");
  }
  std::vector<double> slots(num_experts, 0.0), prob(num_experts, 0.0);
  double total_slots = 0.0;
  for (const RoutingDecision& d : decisions) {
    if (d.probs.size() != num_experts) {
      throw Error(ErrorCode::kDimension, "routing decision width mismatch");
    }
    for (std::size_t i : d.indices) slots[i] += 1.0;
    total_slots += static_cast<double>(d.indices.size());
    for (std::size_t i = 0; i < num_experts; ++i) prob[i] += d.probs[i];
  }
  double metric = 0.0;
  for (std::size_t i = 0; i < num_experts; ++i) {
    metric += (slots[i] / total_slots) *
              (prob[i] / static_cast<double>(decisions.size()));
  }
  return static_cast<double>(num_experts) * metric;
}

}  // namespace spikelite
