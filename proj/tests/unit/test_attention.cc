// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "spikelite/attention.h"

using namespace spikelite;

namespace {

GateVector RandomGate(std::size_t h, std::size_t n, std::size_t dk, std::mt19937_64& rng) {
  // Keep gates away from 0 so long products stay informative.
  return {oracle::Random({h, n, dk}, rng, 0.3, 0.999)};
}

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("softmax over a single token returns its value") {
  AttentionInputs in{Tensor({1, 1, 2}, {0.3f, -0.2f}), Tensor({1, 1, 2}, {0.3f, -0.2f}),
                     Tensor({1, 1, 3}, {1.0f, 2.0f, 3.0f})};
  const Tensor o = SoftmaxAttention(in);
  CHECK(o.vec() == std::vector<float>{1.0f, 2.0f, 3.0f});
}

TEST_CASE("causal softmax matches brute force") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const AttentionInputs in = oracle::RandomInputs(2, 16, 8, 8, rng);
    CHECK(oracle::RelErr(SoftmaxAttention(in), oracle::CausalSoftmax(in)) < 1e-6);
  }
}

TEST_CASE("sink rows are bidirectional among sinks, tokens see sinks") {
  std::mt19937_64 rng(2);
  const std::size_t sinks = 4, n = 12;
  const AttentionInputs in = oracle::RandomInputs(2, n, 8, 8, rng);
  const Tensor ref = oracle::MaskedSoftmax(in, [&](std::size_t i, std::size_t j) {
    if (i < sinks) return j < sinks;
    return j <= i;
  });
  CHECK(oracle::RelErr(SoftmaxAttention(in, sinks), ref) < 1e-6);
  CHECK(CodeOf([&] { SoftmaxAttention(in, n + 1); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("sliding window matches brute force and covering window is softmax") {
  std::mt19937_64 rng(3);
  const AttentionInputs in = oracle::RandomInputs(2, 16, 8, 8, rng);
  CHECK(oracle::RelErr(SlidingWindowAttention(in, 4), oracle::WindowSoftmax(in, 4)) < 1e-6);
  CHECK(oracle::RelErr(SlidingWindowAttention(in, 16), SoftmaxAttention(in)) <= 1e-6);
  CHECK(oracle::RelErr(SlidingWindowAttention(in, 100), SoftmaxAttention(in)) <= 1e-6);
  const Tensor one = SlidingWindowAttention(in, 1);
  CHECK(one == in.v);
  CHECK(CodeOf([&] { SlidingWindowAttention(in, 0); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("shape and emptiness errors") {
  AttentionInputs bad{Tensor({1, 4, 3}), Tensor({1, 4, 2}), Tensor({1, 4, 3})};
  CHECK(CodeOf([&] { SoftmaxAttention(bad); }) == ErrorCode::kDimension);
  AttentionInputs seq_mismatch{Tensor({1, 4, 2}), Tensor({1, 3, 2}), Tensor({1, 4, 3})};
  CHECK(CodeOf([&] { LinearAttentionParallel(seq_mismatch); }) == ErrorCode::kDimension);
  AttentionInputs empty{Tensor({1, 0, 2}), Tensor({1, 0, 2}), Tensor({1, 0, 2})};
  CHECK(CodeOf([&] { SoftmaxAttention(empty); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("linear attention: first step, annihilation and parallel/recurrent") {
  std::mt19937_64 rng(4);
  const AttentionInputs one = oracle::RandomInputs(1, 1, 4, 3, rng);
  const Tensor o1 = LinearAttentionParallel(one);
  double qk = 0.0;
  for (std::size_t a = 0; a < 4; ++a) qk += one.q.at(0, 0, a) * one.k.at(0, 0, a);
  for (std::size_t c = 0; c < 3; ++c) CHECK(o1.at(0, 0, c) == doctest::Approx(qk * one.v.at(0, 0, c)));

  AttentionInputs zeros = oracle::RandomInputs(2, 8, 4, 4, rng);
  zeros.k = Tensor(zeros.k.shape());
  const Tensor annihilated = LinearAttentionParallel(zeros);
  for (float v : annihilated.data()) CHECK(v == 0.0f);

  const AttentionInputs in = oracle::RandomInputs(2, 32, 16, 16, rng);
  const Tensor ref = oracle::LinearParallel(in);
  CHECK(oracle::RelErr(LinearAttentionParallel(in), ref) < 1e-5);
  CHECK(oracle::RelErr(LinearAttentionRecurrent(in), ref) < 1e-5);
}

TEST_CASE("linear attention normalizers match the oracle") {
  std::mt19937_64 rng(5);
  // Non-negative q, k keep the sum normalizer well defined.
  const AttentionInputs in = oracle::RandomInputs(2, 24, 8, 8, rng, 0.0, 1.0);
  const Tensor rms = oracle::GatedRecurrence(in, nullptr, oracle::Norm::kRms);
  const Tensor sum = oracle::GatedRecurrence(in, nullptr, oracle::Norm::kSum);
  CHECK(oracle::RelErr(LinearAttentionParallel(in, OutputNorm::kRms), rms) < 1e-5);
  CHECK(oracle::RelErr(LinearAttentionRecurrent(in, OutputNorm::kRms), rms) < 1e-5);
  CHECK(oracle::RelErr(LinearAttentionParallel(in, OutputNorm::kSum), sum) < 1e-5);
  CHECK(oracle::RelErr(LinearAttentionRecurrent(in, OutputNorm::kSum), sum) < 1e-5);
  CHECK(ParseOutputNorm(OutputNormName(OutputNorm::kSum)) == OutputNorm::kSum);
  CHECK_THROWS_AS(ParseOutputNorm("layer"), Error);
}

TEST_CASE("recurrent step: first step and constant state footprint") {
  std::mt19937_64 rng(6);
  RecurrentState st = RecurrentState::Zeros(2, 4, 3);
  const std::size_t bytes = st.bytes();
  const Tensor q = oracle::Random({2, 4}, rng), k = oracle::Random({2, 4}, rng),
               v = oracle::Random({2, 3}, rng);
  const Tensor o = LinearAttentionStep(q, k, v, st);
  for (std::size_t h = 0; h < 2; ++h) {
    double qk = 0.0;
    for (std::size_t a = 0; a < 4; ++a) qk += q.at(h, a) * k.at(h, a);
    for (std::size_t c = 0; c < 3; ++c) CHECK(o.at(h, c) == doctest::Approx(qk * v.at(h, c)));
  }
  for (int t = 0; t < 1000; ++t) LinearAttentionStep(q, k, v, st, OutputNorm::kRms);
  CHECK(st.bytes() == bytes);
}

TEST_CASE("GLA forms agree with the explicit recurrence for every chunk size") {
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 5u, 32u, 37u}) {
    const AttentionInputs in = oracle::RandomInputs(2, n, 8, 6, rng);
    const GateVector g = RandomGate(2, n, 8, rng);
    const Tensor ref = oracle::GatedRecurrence(in, &g.g);
    CHECK(oracle::RelErr(GlaRecurrent(in, g), ref) < 1e-5);
    CHECK(oracle::RelErr(GlaParallel(in, g), ref) < 1e-5);
    for (std::size_t chunk : {1u, 2u, 3u, 4u, 8u, 64u})
      CHECK(oracle::RelErr(GlaChunkwise(in, g, chunk), ref) < 1e-5);
    CHECK(oracle::RelErr(GlaChunkwise(in, g, n), ref) < 1e-5);
  }
}

TEST_CASE("GLA normalizers agree across forms") {
  std::mt19937_64 rng(8);
  const AttentionInputs in = oracle::RandomInputs(2, 20, 8, 8, rng, 0.0, 1.0);
  const GateVector g = RandomGate(2, 20, 8, rng);
  for (auto [norm, ref_norm] : {std::pair{OutputNorm::kRms, oracle::Norm::kRms},
                                std::pair{OutputNorm::kSum, oracle::Norm::kSum}}) {
    const Tensor ref = oracle::GatedRecurrence(in, &g.g, ref_norm);
    CHECK(oracle::RelErr(GlaRecurrent(in, g, norm), ref) < 1e-5);
    CHECK(oracle::RelErr(GlaParallel(in, g, norm), ref) < 1e-5);
    CHECK(oracle::RelErr(GlaChunkwise(in, g, 4, norm), ref) < 1e-5);
  }
}

TEST_CASE("GLA gate limits") {
  std::mt19937_64 rng(9);
  const AttentionInputs in = oracle::RandomInputs(1, 10, 4, 4, rng);
  const GateVector ones{Tensor::Full({1, 10, 4}, 1.0f)};
  CHECK(oracle::RelErr(GlaRecurrent(in, ones), LinearAttentionRecurrent(in)) < 1e-6);

  // g = 0 forgets everything: o_t = (q_t . k_t) v_t.
  const GateVector zeros{Tensor({1, 10, 4})};
  const Tensor o = GlaChunkwise(in, zeros, 3);
  for (std::size_t t = 0; t < 10; ++t) {
    double qk = 0.0;
    for (std::size_t a = 0; a < 4; ++a) qk += in.q.at(0, t, a) * in.k.at(0, t, a);
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(o.at(0, t, c) == doctest::Approx(qk * in.v.at(0, t, c)).epsilon(1e-5));
  }
}

TEST_CASE("gate domain and chunk validation") {
  std::mt19937_64 rng(10);
  const AttentionInputs in = oracle::RandomInputs(1, 4, 2, 2, rng);
  GateVector bad{Tensor::Full({1, 4, 2}, 0.5f)};
  bad.g[3] = 1.5f;
  CHECK(CodeOf([&] { GlaRecurrent(in, bad); }) == ErrorCode::kDomain);
  bad.g[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK(CodeOf([&] { GlaParallel(in, bad); }) == ErrorCode::kDomain);
  const GateVector ok{Tensor::Full({1, 4, 2}, 0.5f)};
  CHECK(CodeOf([&] { GlaChunkwise(in, ok, 0); }) == ErrorCode::kInvalidArgument);
  const GateVector wrong{Tensor::Full({1, 3, 2}, 0.5f)};
  CHECK(CodeOf([&] { GlaRecurrent(in, wrong); }) == ErrorCode::kDimension);
}

TEST_CASE("chunkwise state hand-off continues a sequence") {
  std::mt19937_64 rng(11);
  const std::size_t n = 30, split = 13;
  const AttentionInputs in = oracle::RandomInputs(2, n, 6, 5, rng);
  const GateVector g = RandomGate(2, n, 6, rng);
  const Tensor whole = GlaRecurrent(in, g);

  auto part = [&](const Tensor& t, std::size_t lo, std::size_t hi) {
    Tensor out({t.dim(0), hi - lo, t.dim(2)});
    for (std::size_t h = 0; h < t.dim(0); ++h)
      for (std::size_t s = lo; s < hi; ++s)
        for (std::size_t c = 0; c < t.dim(2); ++c) out.at(h, s - lo, c) = t.at(h, s, c);
    return out;
  };
  RecurrentState st = RecurrentState::Zeros(2, 6, 5);
  const Tensor a = GlaChunkwise({part(in.q, 0, split), part(in.k, 0, split), part(in.v, 0, split)},
                                {part(g.g, 0, split)}, 4, OutputNorm::kNone, &st);
  const Tensor b = GlaChunkwise({part(in.q, split, n), part(in.k, split, n), part(in.v, split, n)},
                                {part(g.g, split, n)}, 4, OutputNorm::kNone, &st);
  CHECK(oracle::RelErr(a, part(whole, 0, split)) < 1e-5);
  CHECK(oracle::RelErr(b, part(whole, split, n)) < 1e-5);

  // The recurrent state after the split run matches the one-shot state.
  RecurrentState full = RecurrentState::Zeros(2, 6, 5);
  GlaRecurrent(in, g, OutputNorm::kNone, &full);
  CHECK(oracle::RelErr(st.s, full.s) < 1e-5);
}

TEST_CASE("key-tied gate") {
  const GateVector half = KeyTiedGate(Tensor::Full({1, 2, 3}, 0.5f));
  for (float v : half.g.data()) CHECK(v == 0.5f);
  const GateVector edge = KeyTiedGate(Tensor::Full({1, 1, 1}, 1.0f));
  CHECK(edge.g[0] == 0.0f);
  std::mt19937_64 rng(12);
  const Tensor k = oracle::Random({2, 5, 4}, rng, 0.0, 1.0);
  const GateVector g = KeyTiedGate(k);
  for (std::size_t i = 0; i < k.size(); ++i) CHECK(k[i] + g.g[i] == doctest::Approx(1.0f));
  CHECK(CodeOf([&] { KeyTiedGate(Tensor::Full({1, 1, 1}, 1.2f)); }) == ErrorCode::kDomain);
  CHECK(CodeOf([&] { KeyTiedGate(Tensor::Full({1, 1, 1}, -0.1f)); }) == ErrorCode::kDomain);
}

TEST_CASE("attention maps reproduce outputs and keep their structure") {
  std::mt19937_64 rng(13);
  const AttentionInputs in = oracle::RandomInputs(2, 12, 4, 4, rng);
  const AttentionMap sm = BuildAttentionMap(in, MapKind::kSoftmax);
  CHECK(oracle::RelErr(ApplyAttentionMap(sm, in.v), SoftmaxAttention(in)) < 1e-6);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 12; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 12; ++j) {
        row += sm.a.at(h, i, j);
        if (j > i) CHECK(sm.a.at(h, i, j) == 0.0f);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }

  const AttentionMap wide = BuildAttentionMap(in, MapKind::kWindowed, 12);
  CHECK(wide.a == sm.a);
  const AttentionMap win = BuildAttentionMap(in, MapKind::kWindowed, 3);
  CHECK(oracle::RelErr(ApplyAttentionMap(win, in.v), SlidingWindowAttention(in, 3)) < 1e-6);
  CHECK(win.a.at(0, 10, 5) == 0.0f);
  CHECK_THROWS_AS(BuildAttentionMap(in, MapKind::kWindowed), Error);

  const AttentionMap lin = BuildAttentionMap(in, MapKind::kLinear);
  CHECK(oracle::RelErr(ApplyAttentionMap(lin, in.v), LinearAttentionParallel(in)) < 1e-5);
}

TEST_CASE("linear attention maps have rank at most d_k") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const AttentionInputs in = oracle::RandomInputs(1, 8, 4, 4, rng, 0.0, 1.0);
    const AttentionMap lin = BuildAttentionMap(in, MapKind::kLinear);
    CHECK(oracle::NumericalRank(lin.a, 0) <= 4);
    for (float v : lin.a.data()) CHECK(v >= 0.0f);
  }
}

TEST_CASE("perturbing a later token leaves earlier outputs unchanged") {
  std::mt19937_64 rng(15);
  const std::size_t n = 16, t_prime = 9;
  const AttentionInputs in = oracle::RandomInputs(2, n, 4, 4, rng);
  AttentionInputs moved = in;
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t c = 0; c < 4; ++c) {
      moved.k.at(h, t_prime, c) += 3.0f;
      moved.v.at(h, t_prime, c) -= 2.0f;
      moved.q.at(h, t_prime, c) *= -1.0f;
    }
  const GateVector g{Tensor::Full({2, n, 4}, 0.9f)};
  auto check_prefix = [&](const Tensor& a, const Tensor& b) {
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t t = 0; t < t_prime; ++t)
        for (std::size_t c = 0; c < 4; ++c) CHECK(a.at(h, t, c) == b.at(h, t, c));
  };
  check_prefix(SoftmaxAttention(in), SoftmaxAttention(moved));
  check_prefix(SlidingWindowAttention(in, 4), SlidingWindowAttention(moved, 4));
  check_prefix(LinearAttentionRecurrent(in), LinearAttentionRecurrent(moved));
  check_prefix(GlaRecurrent(in, g), GlaRecurrent(moved, g));
  check_prefix(GlaChunkwise(in, g, 4), GlaChunkwise(moved, g, 4));
  check_prefix(LinearAttentionParallel(in), LinearAttentionParallel(moved));
}
