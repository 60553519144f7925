// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPIKELITE_MOE_H_
#define SPIKELITE_MOE_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "spikelite/tensor.h"

namespace spikelite {

// Computes y = W x. The default is a plain float matvec; the runtime swaps in
// the quantized spike-driven projection.
using MatVecFn = std::function<void(const Tensor& w, std::span<const float> x,
                                    std::span<float> y)>;

enum class Activation { kSilu, kRelu };

const char* ActivationName(Activation act);
Activation ParseActivation(std::string_view name);

// Gated FFN: down(act(gate x) * (up x)).
struct DenseFFN {
  Tensor w_gate;  // [d_ff, d_model]
  Tensor w_up;    // [d_ff, d_model]
  Tensor w_down;  // [d_model, d_ff]
  Activation activation = Activation::kSilu;

  std::size_t d_model() const { return w_gate.dim(1); }
  std::size_t d_ff() const { return w_gate.dim(0); }
  void Validate() const;
};

std::vector<float> FfnForward(const DenseFFN& ffn, std::span<const float> x,
                              const MatVecFn& matvec = {});

enum class RouterFn { kSoftmax, kSigmoid };

const char* RouterFnName(RouterFn fn);
RouterFn ParseRouterFn(std::string_view name);

struct MoELayer {
  std::vector<DenseFFN> experts;  // N routed experts
  std::vector<DenseFFN> shared;   // S always-on experts
  Tensor router_w;                // [N, d_model]
  std::size_t top_k = 1;
  RouterFn sigma = RouterFn::kSoftmax;

  std::size_t num_experts() const { return experts.size(); }
  void Validate() const;
};

struct RoutingDecision {
  std::vector<std::size_t> indices;  // descending probability, ties low-first
  std::vector<float> probs;          // all N probabilities
};

RoutingDecision Route(std::span<const float> x, const MoELayer& layer);

// sum_{i in top-k} p_i E_i(x) + sum_s E_s(x). The routing used is written to
// `decision` when given.
std::vector<float> MoeForward(std::span<const float> x, const MoELayer& layer,
                              const MatVecFn& matvec = {},
                              RoutingDecision* decision = nullptr);

// cbrt(1 / (S + k/N)).
double ScalingFactor(std::size_t num_experts, std::size_t top_k,
                     std::size_t num_shared);

// Replicates `dense` into N routed and S shared experts with every matrix
// scaled by ScalingFactor(N, top_k, S). Router rows are drawn uniformly from
// [-1/sqrt(d_model), 1/sqrt(d_model)] with the given seed.
MoELayer Upcycle(const DenseFFN& dense, std::size_t num_experts,
                 std::size_t top_k, std::size_t num_shared, std::uint64_t seed,
                 RouterFn sigma = RouterFn::kSoftmax);

// N * sum_i f_i P_i, with f_i the share of routing slots taken by expert i and
// P_i its mean router probability. 1.0 for perfectly uniform routing.
double LoadBalanceMetric(std::span<const RoutingDecision> decisions,
                         std::size_t num_experts);

}  // namespace spikelite

#endif  // SPIKELITE_MOE_H_
