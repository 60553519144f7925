// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "spikelite/spike_codec.h"

using namespace spikelite;

namespace {

std::vector<std::int32_t> Range(std::int32_t lo, std::int32_t hi) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(hi - lo + 1));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

// Step-by-step soft-reset IF neuron with no decay, written independently.
std::int64_t StepIf(double x, double v_th, int steps) {
  double v = 0.0;
  std::int64_t spikes = 0;
  for (int t = 0; t < steps; ++t) {
    v += t == 0 ? std::abs(x) + v_th / 2.0 : 0.0;
    if (v >= v_th) {
      ++spikes;
      v -= v_th;
    }
  }
  return x < 0 ? -spikes : spikes;
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

TEST_CASE("adaptive threshold is mean |x| / k") {
  const Tensor x({4}, {1, -1, 3, -3});
  CHECK(AdaptiveThreshold(x, 1.0f, Granularity::kPerTensor)[0] == 2.0f);
  CHECK(AdaptiveThreshold(x, 4.0f, Granularity::kPerTensor)[0] == 0.5f);
  const Tensor rows({2, 2}, {1, -1, 3, -5});
  const Tensor per_token = AdaptiveThreshold(rows, 1.0f, Granularity::kPerToken);
  CHECK(per_token.vec() == std::vector<float>{1.0f, 4.0f});
  CHECK(CodeOf([&] { AdaptiveThreshold(x, 0.0f, Granularity::kPerTensor); }) ==
        ErrorCode::kInvalidArgument);
  CHECK(CodeOf([&] { AdaptiveThreshold(x, -1.0f, Granularity::kPerTensor); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("gaussian threshold is about 0.8 sigma") {
  std::mt19937_64 rng(51);
  const Tensor x = oracle::Gaussian({1000000}, rng);
  const float v = AdaptiveThreshold(x, 1.0f, Granularity::kPerTensor)[0];
  CHECK(v == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(0.01));
}

TEST_CASE("zero input gets the epsilon threshold and zero counts") {
  const SpikeCountTensor c = SpikeEncode(Tensor({2, 3}), 1.0f);
  for (float v : c.v_th.data()) CHECK(v == kZeroThreshold);
  for (auto n : c.counts) CHECK(n == 0);
}

TEST_CASE("counts round half away from zero") {
  CHECK(EncodeCounts(Tensor({1}, {5.0f}), Tensor({1}, {2.0f})).counts[0] == 3);
  CHECK(EncodeCounts(Tensor({1}, {-5.0f}), Tensor({1}, {2.0f})).counts[0] == -3);
  CHECK(EncodeCounts(Tensor({1}, {-3.9f}), Tensor({1}, {1.0f})).counts[0] == -4);
  CHECK(CodeOf([] { EncodeCounts(Tensor({1}, {NAN}), Tensor({1}, {1.0f})); }) ==
        ErrorCode::kNonFinite);
  CHECK(CodeOf([] { EncodeCounts(Tensor({1}, {1.0f}), Tensor({1}, {0.0f})); }) ==
        ErrorCode::kDomain);
}

TEST_CASE("reconstruction error is at most half a threshold") {
  std::mt19937_64 rng(52);
  for (Granularity g : {Granularity::kPerToken, Granularity::kPerTensor}) {
    for (float k : {0.5f, 1.0f, 3.0f, 8.0f}) {
      const Tensor x = oracle::Gaussian({16, 64}, rng);
      const SpikeCountTensor c = SpikeEncode(x, k, g);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double vt = c.threshold_for_token(i / 64);
        CHECK(std::abs(x[i] - vt * c.counts[i]) <= vt / 2.0 * (1.0 + 1e-6));
        CHECK(oracle::RoundHalfAway(x[i] / vt) == c.counts[i]);
        if (c.counts[i] != 0) CHECK((c.counts[i] > 0) == (x[i] > 0));
      }
      const Tensor r = c.Reconstruct();
      CHECK(r.shape() == x.shape());
    }
  }
}

TEST_CASE("raising k never shrinks counts and tightens reconstruction") {
  std::mt19937_64 rng(53);
  const Tensor x = oracle::Gaussian({8, 128}, rng);
  std::vector<std::int32_t> prev(x.size(), 0);
  double prev_err = INFINITY;
  for (float k : {0.25f, 0.5f, 1.0f, 2.0f, 4.0f, 8.0f, 16.0f}) {
    const SpikeCountTensor c = SpikeEncode(x, k, Granularity::kPerTensor);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(c.counts[i]) >= std::abs(prev[i]));
    const Tensor r = c.Reconstruct();
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err += std::abs(x[i] - r[i]);
    CHECK(err <= prev_err);
    prev = c.counts;
    prev_err = err;
  }
}

TEST_CASE("IF simulation matches the counts") {
  NeuronParams soft;
  CHECK(IfSimulate(5.0, 1.0, 10, soft) == 5);
  CHECK(StepIf(5.0, 1.0, 10) == 5);
  CHECK(IfSimulate(0.49, 1.0, 10, soft) == 0);
  const double v_th = 0.37;
  for (int i = 0; i <= 2000; ++i) {
    const double x = -10.0 * v_th + 20.0 * v_th * i / 2000.0;
    const auto ref = EncodeCounts(Tensor({1}, {static_cast<float>(x)}),
                                  Tensor({1}, {static_cast<float>(v_th)}))
                         .counts[0];
    const double xf = static_cast<float>(x), vf = static_cast<float>(v_th);
    CHECK(IfSimulate(xf, vf, 12, soft) == ref);
    CHECK(StepIf(xf, vf, 12) == ref);
  }
  CHECK_THROWS_AS(IfSimulate(1.0, 1.0, 0, soft), Error);
}

TEST_CASE("hard reset never fires more than soft reset") {
  NeuronParams soft, hard;
  hard.reset = ResetMode::kHard;
  for (double x = 0.0; x < 8.0; x += 0.13) CHECK(IfSimulate(x, 1.0, 10, hard) <= IfSimulate(x, 1.0, 10, soft));
  CHECK(IfSimulate(5.0, 1.0, 10, hard) == 1);
}

TEST_CASE("LIF run with decay") {
  NeuronParams p;
  p.lambda = 0.5;
  const std::vector<double> in = {0.6, 0.6, 0.6, 0.0};
  // v: 0.6 -> 0.9 -> 1.05 (fire) -> 0.025
  CHECK(LifRun(in, 1.0, p) == std::vector<int>{0, 0, 1, 0});
  p.lambda = 1.5;
  CHECK_THROWS_AS(LifRun(in, 1.0, p), Error);
}

TEST_CASE("scheme examples") {
  const std::int32_t c256[] = {256};
  CHECK(ExpandCounts(c256, 1, SpikeScheme::kBinary).timesteps == 256);
  CHECK(ExpandCounts(c256, 1, SpikeScheme::kTernary).timesteps == 256);
  CHECK(CodeOf([&] { ExpandCounts(c256, 1, SpikeScheme::kBitwisePure, 8); }) == ErrorCode::kOverflow);
  const std::int32_t c255[] = {255};
  CHECK(ExpandCounts(c255, 1, SpikeScheme::kBitwisePure, 8).timesteps == 8);

  const std::int32_t m3[] = {-3};
  const SpikeTrain t = ExpandCounts(m3, 1, SpikeScheme::kTernary);
  CHECK(t.events == std::vector<std::int8_t>{-1, -1, -1});

  const std::int32_t five[] = {5};
  CHECK(ExpandCounts(five, 1, SpikeScheme::kBitwisePure, 8).events ==
        std::vector<std::int8_t>{1, 0, 1, 0, 0, 0, 0, 0});
  CHECK(ExpandCounts(five, 1, SpikeScheme::kBinary).events == std::vector<std::int8_t>(5, 1));

  // Signed-digit form: 7 = 8 - 1 in three steps of the 4-bit budget.
  const std::int32_t seven[] = {7};
  const SpikeTrain b7 = ExpandCounts(seven, 1, SpikeScheme::kBitwiseBidir, 5);
  CHECK(b7.timesteps == 4);
  CHECK(b7.events == std::vector<std::int8_t>{-1, 0, 0, 1});

  const std::int32_t neg[] = {-2};
  CHECK(ExpandCounts(neg, 1, SpikeScheme::kBitwiseTwos, 4).events ==
        std::vector<std::int8_t>{0, 1, 1, 1});
  CHECK(CodeOf([&] { ExpandCounts(neg, 1, SpikeScheme::kBinary); }) == ErrorCode::kDomain);
  CHECK(CodeOf([&] { ExpandCounts(neg, 1, SpikeScheme::kBitwisePure, 8); }) == ErrorCode::kDomain);
  const std::int32_t big[] = {128};
  CHECK(CodeOf([&] { ExpandCounts(big, 1, SpikeScheme::kBitwiseTwos, 8); }) == ErrorCode::kOverflow);
  CHECK(CodeOf([&] { ExpandCounts(big, 1, SpikeScheme::kBitwiseBidir, 8); }) == ErrorCode::kOverflow);
}

TEST_CASE("collapse inverts expand exhaustively") {
  struct Case {
    SpikeScheme scheme;
    std::int32_t lo, hi;
  };
  for (const Case& c : {Case{SpikeScheme::kTernary, -127, 127}, Case{SpikeScheme::kBinary, 0, 255},
                        Case{SpikeScheme::kBitwisePure, 0, 255},
                        Case{SpikeScheme::kBitwiseBidir, -127, 127},
                        Case{SpikeScheme::kBitwiseTwos, -128, 127}}) {
    const auto counts = Range(c.lo, c.hi);
    const SpikeTrain train = ExpandCounts(counts, counts.size(), c.scheme, 8);
    CHECK(Collapse(train) == counts);
    // Per-element trains too, so every count owns its own timestep budget.
    for (std::int32_t v : counts) {
      const std::int32_t one[] = {v};
      const SpikeTrain t = ExpandCounts(one, 1, c.scheme, 8);
      CHECK(Collapse(t) == std::vector<std::int32_t>{v});
      for (std::int8_t e : t.events) {
        CHECK((e >= -1 && e <= 1));
        if (c.scheme == SpikeScheme::kBinary || c.scheme == SpikeScheme::kBitwisePure ||
            c.scheme == SpikeScheme::kBitwiseTwos)
          CHECK(e >= 0);
      }
    }
  }
  CHECK(ExpandCounts(Range(0, 255), 256, SpikeScheme::kBitwiseBidir, 9).timesteps == 8);
}

TEST_CASE("all-zero trains collapse to zero and bad events are rejected") {
  const std::int32_t zeros[] = {0, 0, 0};
  for (SpikeScheme s : {SpikeScheme::kBinary, SpikeScheme::kTernary, SpikeScheme::kBitwisePure,
                        SpikeScheme::kBitwiseBidir, SpikeScheme::kBitwiseTwos})
    CHECK(Collapse(ExpandCounts(zeros, 3, s, 8)) == std::vector<std::int32_t>{0, 0, 0});
  const std::int32_t two[] = {2};
  SpikeTrain t = ExpandCounts(two, 1, SpikeScheme::kBinary);
  t.events[0] = -1;
  CHECK(CodeOf([&] { Collapse(t); }) == ErrorCode::kDomain);
}

TEST_CASE("event counts: binary >= ternary >= bitwise for counts >= 2") {
  for (std::int32_t c = 2; c <= 127; ++c) {
    const std::int32_t one[] = {c};
    const auto bin = ExpandCounts(one, 1, SpikeScheme::kBinary).NonZeroEvents();
    const auto ter = ExpandCounts(one, 1, SpikeScheme::kTernary).NonZeroEvents();
    const auto bit = ExpandCounts(one, 1, SpikeScheme::kBitwisePure, 8).NonZeroEvents();
    const auto bid = ExpandCounts(one, 1, SpikeScheme::kBitwiseBidir, 8).NonZeroEvents();
    CHECK(bin >= ter);
    CHECK(ter >= bit);
    CHECK(bid <= bit);
  }
}

TEST_CASE("ternary halves binary on a symmetric signed range") {
  // Binary covers [-M, M] only after an offset of M, so it needs twice the
  // timesteps; events follow whenever mean |c| <= M / 2.
  std::mt19937_64 rng(35);
  const Tensor x = oracle::Gaussian({8, 64}, rng);
  SpikeCountTensor c = SpikeEncode(x, 2.0f);
  std::vector<std::int32_t> sym = c.counts;
  for (std::int32_t v : c.counts) sym.push_back(-v);
  std::int32_t m = 0;
  for (std::int32_t v : sym) m = std::max(m, std::abs(v));
  std::vector<std::int32_t> shifted(sym);
  for (std::int32_t& v : shifted) v += m;
  const SpikeTrain ter = ExpandCounts(sym, sym.size(), SpikeScheme::kTernary);
  const SpikeTrain bin = ExpandCounts(shifted, shifted.size(), SpikeScheme::kBinary);
  CHECK(2 * ter.timesteps == bin.timesteps);
  CHECK(2 * ter.NonZeroEvents() <= bin.NonZeroEvents());
}

TEST_CASE("an outlier bursts without dragging the threshold") {
  std::mt19937_64 rng(54);
  Tensor x = oracle::Gaussian({1, 512}, rng);
  const float before = AdaptiveThreshold(x, 1.0f, Granularity::kPerToken)[0];
  x[100] = 10.0f;
  const SpikeCountTensor c = SpikeEncode(x, 1.0f);
  std::vector<std::int32_t> mags;
  for (auto n : c.counts) mags.push_back(std::abs(n));
  std::nth_element(mags.begin(), mags.begin() + 256, mags.end());
  CHECK(c.counts[100] > mags[256]);
  CHECK(c.v_th[0] - before < 10.0f / 512.0f + 1e-6f);
}

TEST_CASE("spike projection: both paths agree") {
  std::mt19937_64 rng(55);
  const Tensor x = oracle::Gaussian({4, 16}, rng);
  const SpikeCountTensor c = SpikeEncode(x, 2.0f);

  Tensor eye({16, 16});
  for (std::size_t i = 0; i < 16; ++i) eye.at(i, i) = 1.0f;
  CHECK(SpikeProject(eye, c) == c.Reconstruct());

  SpikeCountTensor silent = c;
  std::fill(silent.counts.begin(), silent.counts.end(), 0);
  const Tensor quiet = SpikeProject(oracle::Random({5, 16}, rng), silent);
  for (float v : quiet.data()) CHECK(v == 0.0f);

  // Integer weights keep every partial sum exact, so the two paths agree bitwise.
  Tensor w({8, 16});
  std::uniform_int_distribution<int> d(-127, 127);
  for (float& v : w.data()) v = static_cast<float>(d(rng));
  for (SpikeScheme s : {SpikeScheme::kTernary, SpikeScheme::kBitwiseBidir, SpikeScheme::kBitwiseTwos}) {
    const SpikeTrain train = Expand(c, s, IsBitwise(s) ? std::optional<int>(8) : std::nullopt);
    CHECK(SpikeProjectEvents(w, train, c.v_th) == SpikeProject(w, c));
  }
  // Real-valued weights agree to rounding.
  const Tensor wr = oracle::Random({8, 16}, rng);
  const SpikeTrain tern = Expand(c, SpikeScheme::kTernary);
  CHECK(oracle::RelErr(SpikeProjectEvents(wr, tern, c.v_th), SpikeProject(wr, c)) < 1e-6);
  CHECK_THROWS_AS(SpikeProject(oracle::Random({8, 15}, rng), c), Error);
}

TEST_CASE("names parse back") {
  for (SpikeScheme s : {SpikeScheme::kBinary, SpikeScheme::kTernary, SpikeScheme::kBitwisePure,
                        SpikeScheme::kBitwiseBidir, SpikeScheme::kBitwiseTwos})
    CHECK(ParseScheme(SchemeName(s)) == s);
  CHECK(ParseGranularity("per_tensor") == Granularity::kPerTensor);
  CHECK_THROWS_AS(ParseScheme("quaternary"), Error);
}
