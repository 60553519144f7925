// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "spikelite/model.h"

using namespace spikelite;

namespace {

ModelConfig Small(ModelKind kind, std::size_t depth = 4) {
  ModelConfig c = ModelConfig::ForKind(kind, depth, 32, 4, 8, 97, 48);
  return c;
}

ModelConfig WithLayout(ModelConfig c, ModelKind kind, LayoutOverrides o) {
  c.layout = BuildLayout(kind, c.depth, o);
  return c;
}

std::vector<std::int32_t> Prompt(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  return SyntheticTokens(n, vocab, seed);
}

}  // namespace

TEST_CASE("building is deterministic in the seed") {
  const ModelConfig c = Small(ModelKind::k76BLike);
  const Model a = BuildModel(c, 5), b = BuildModel(c, 5), other = BuildModel(c, 6);
  std::vector<Tensor> ta, tb, to;
  VisitTensors(a, [&](const std::string&, const Tensor& t) { ta.push_back(t); });
  VisitTensors(b, [&](const std::string&, const Tensor& t) { tb.push_back(t); });
  VisitTensors(other, [&](const std::string&, const Tensor& t) { to.push_back(t); });
  CHECK(ta == tb);
  CHECK_FALSE(ta == to);
  const auto p = Prompt(12, c.vocab, 1);
  CHECK(Prefill(a, p).logits == Prefill(b, p).logits);
}

TEST_CASE("config invariants") {
  const ModelConfig c = Small(ModelKind::k7BLike);
  REQUIRE(c.layout.size() == 4);
  CHECK(c.layout[0].attention == AttentionKind::kLinear);
  CHECK(c.layout[1].attention == AttentionKind::kSliding);
  CHECK(c.layout[2].attention == AttentionKind::kLinear);
  CHECK(c.layout[3].attention == AttentionKind::kSliding);

  ModelConfig bad = c;
  bad.d_model = 30;
  CHECK_THROWS_AS(bad.Validate(), Error);
  CHECK_THROWS_AS(BuildModel(bad, 0), Error);
  ModelConfig short_layout = c;
  short_layout.layout.pop_back();
  CHECK_THROWS_AS(short_layout.Validate(), Error);

  const ModelConfig big = Small(ModelKind::k76BLike, 8);
  CHECK(ModelConfigFromJson(ToJson(big)) == big);
  const nlohmann::json fam = {{"family", "7B-like"}, {"depth", 4}, {"d_model", 32}, {"heads", 4},
                              {"d_head", 8}, {"vocab", 97}, {"d_ff", 48}};
  CHECK(ModelConfigFromJson(fam).layout == c.layout);
  nlohmann::json unknown = fam;
  unknown["colour"] = "blue";
  CHECK_THROWS_AS(ModelConfigFromJson(unknown), Error);
}

TEST_CASE("parameter accounting") {
  const Model m = BuildModel(Small(ModelKind::k76BLike), 1);
  std::size_t total = 0;
  VisitTensors(m, [&](const std::string&, const Tensor& t) { total += t.size(); });
  CHECK(m.ParameterCount() == total);
  CHECK(m.ActiveParameterCount() < m.ParameterCount());
}

TEST_CASE("bad tokens are rejected") {
  const Model m = BuildModel(Small(ModelKind::kLinearOnly), 1);
  const std::int32_t bad[] = {3, 97};
  CHECK_THROWS_AS(Prefill(m, bad), Error);
  const std::int32_t neg[] = {-1};
  CHECK_THROWS_AS(Prefill(m, neg), Error);
  CHECK_THROWS_AS(Prefill(m, std::span<const std::int32_t>{}), Error);
}

TEST_CASE("prefill plus decode equals batch prefill for every family") {
  for (ModelKind kind : {ModelKind::k7BLike, ModelKind::k76BLike, ModelKind::kLinearOnly,
                         ModelKind::kSoftmaxOnly, ModelKind::kSlidingOnly}) {
    ModelConfig c = WithLayout(Small(kind), kind, {.window = 6, .sink_count = 2});
    if (kind == ModelKind::k76BLike) c.moe = MoeSettings{};
    c.chunk = 8;
    const Model m = BuildModel(c, 11);
    const auto p = Prompt(20, c.vocab, 2);
    PrefillResult pre = Prefill(m, std::span(p).first(9));
    for (std::size_t t = 9; t < 20; ++t) {
      const auto step = DecodeStep(m, p[t], pre.caches);
      const auto batch = Prefill(m, std::span(p).first(t + 1)).logits;
      CHECK_MESSAGE(oracle::RelErr(step, batch) < 1e-5, ModelKindName(kind), " t=", t);
    }
  }
}

TEST_CASE("cache memory laws") {
  SUBCASE("linear state is constant") {
    const Model m = BuildModel(Small(ModelKind::kLinearOnly, 2), 3);
    const auto a = Prefill(m, Prompt(64, 97, 1));
    const auto b = Prefill(m, Prompt(4096, 97, 1));
    CHECK(CacheBytes(a.caches) == CacheBytes(b.caches));
    auto caches = a.caches;
    for (int t = 0; t < 1000; ++t) DecodeStep(m, t % 97, caches);
    CHECK(CacheBytes(caches) == CacheBytes(a.caches));
  }
  SUBCASE("sliding window holds min(n, w) entries") {
    ModelConfig c = WithLayout(Small(ModelKind::kSlidingOnly, 2), ModelKind::kSlidingOnly, {.window = 8});
    const Model m = BuildModel(c, 3);
    for (std::size_t n : {3u, 8u, 30u}) {
      auto r = Prefill(m, Prompt(n, 97, n));
      CHECK(r.caches[0].branches[0].entries() == std::min<std::size_t>(n, 8));
      DecodeStep(m, 1, r.caches);
      CHECK(r.caches[0].branches[0].entries() == std::min<std::size_t>(n + 1, 8));
    }
  }
  SUBCASE("full attention grows by one pair per step") {
    ModelConfig c = WithLayout(Small(ModelKind::kSoftmaxOnly, 2), ModelKind::kSoftmaxOnly, {.sink_count = 2});
    const Model m = BuildModel(c, 3);
    auto r = Prefill(m, Prompt(5, 97, 1));
    CHECK(r.caches[0].branches[0].entries() == 5 + 2);
    const std::size_t pair = 2 * c.heads * c.d_head * sizeof(float) * c.depth;
    for (int t = 0; t < 4; ++t) {
      const std::size_t before = CacheBytes(r.caches);
      DecodeStep(m, 7, r.caches);
      CHECK(CacheBytes(r.caches) == before + pair);
    }
  }
}

TEST_CASE("cache from another model is rejected") {
  const Model la = BuildModel(Small(ModelKind::kLinearOnly), 1);
  const Model fa = BuildModel(Small(ModelKind::kSoftmaxOnly), 1);
  auto r = Prefill(la, Prompt(4, 97, 1));
  CHECK_THROWS_AS(DecodeStep(fa, 1, r.caches), Error);
}

TEST_CASE("all-SWA conversion with a covering window is logit exact") {
  const Model src = BuildModel(Small(ModelKind::kSoftmaxOnly), 9);
  const ConversionPlan plan =
      PlanFromJson({{"target", "SWA"}, {"window", 64}}, src.config);
  ConversionSummary summary;
  const Model dst = ConvertFromSoftmax(src, plan, &summary);
  REQUIRE(summary.size() == 4);
  CHECK(summary[0].from == "FA");
  CHECK(summary[0].to == "SWA");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = Prompt(40, 97, seed);
    CHECK(Prefill(dst, p).logits == Prefill(src, p).logits);
  }
}

TEST_CASE("all-LA conversion gives nonnegative low-rank maps") {
  const Model src = BuildModel(Small(ModelKind::kSoftmaxOnly), 9);
  const Model dst = ConvertFromSoftmax(src, PlanFromJson({{"target", "LA"}}, src.config));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(dst.layers[i].mixer.branches[0].wq == src.layers[i].mixer.branches[0].wq);
    CHECK(dst.layers[i].dense->w_up == src.layers[i].dense->w_up);
  }
  const AttentionGeometry g = dst.config.geometry();
  const auto p = Prompt(24, 97, 3);
  for (std::size_t l = 0; l < 4; ++l) {
    const Tensor x = LayerInput(dst, p, l);
    const AttentionInputs in =
        ProjectBranchInputs(BranchesOf(dst.layers[l].spec)[0], dst.layers[l].mixer.branches[0], g, x);
    const AttentionMap map = BuildAttentionMap(in, MapKind::kLinear);
    for (float v : map.a.data()) CHECK(v >= 0.0f);
    for (std::size_t h = 0; h < g.heads; ++h) CHECK(oracle::NumericalRank(map.a, h) <= g.d_head);
  }
}

TEST_CASE("conversion with MoE upcycling") {
  const Model src = BuildModel(Small(ModelKind::kSoftmaxOnly), 9);
  const nlohmann::json doc = {{"target", "LA+SWA"}, {"window", 16}, {"gate", "key_tied"},
                              {"moe", {{"experts", 4}, {"top_k", 1}, {"shared", 1}, {"layers", {1, 3}}}}};
  ConversionSummary summary;
  const Model dst = ConvertFromSoftmax(src, PlanFromJson(doc, src.config), &summary);
  const float f = static_cast<float>(ScalingFactor(4, 1, 1));
  CHECK_FALSE(dst.layers[0].moe.has_value());
  CHECK_FALSE(summary[0].scaling_factor.has_value());
  REQUIRE(dst.layers[1].moe.has_value());
  CHECK(*summary[1].scaling_factor == doctest::Approx(std::cbrt(1.0 / 1.25)));
  for (const DenseFFN& e : dst.layers[1].moe->experts)
    for (std::size_t i = 0; i < e.w_gate.size(); ++i)
      CHECK(e.w_gate[i] == f * src.layers[1].dense->w_gate[i]);
  CHECK_THROWS_AS(PlanFromJson({{"layers", {"LA", "SWA"}}}, src.config), Error);
  CHECK_THROWS_AS(PlanFromJson({{"target", "LA"}, {"family", "7B-like"}}, src.config), Error);
  const Model la = BuildModel(Small(ModelKind::kLinearOnly), 1);
  CHECK_THROWS_AS(ConvertFromSoftmax(la, PlanFromJson({{"target", "LA"}}, la.config)), Error);
}

TEST_CASE("spike-driven decoding") {
  ModelConfig c = Small(ModelKind::k7BLike);
  const Model m = BuildModel(c, 4);
  const auto p = Prompt(8, 97, 5);
  SpikeProjector proj(SpikeSettings{.k = 8.0f});
  const GenerateResult spiked = Generate(m, p, 6, proj.fn());
  const GenerateResult plain = Generate(m, p, 6);
  CHECK(spiked.tokens.size() == 6);
  CHECK(proj.projections() > 0);
  const FiringStats s = proj.stats();
  CHECK(s.avg_spikes_per_channel > 1.0);
  CHECK(oracle::RelErr(spiked.last_logits, plain.last_logits) < 0.5);

  SpikeProjector binary(SpikeSettings{.k = 1.0f, .scheme = SpikeScheme::kBinary});
  CHECK_THROWS_AS(Generate(m, p, 2, binary.fn()), Error);
  CHECK_THROWS_AS(SpikeProjector(SpikeSettings{.k = 0.0f}), Error);
}

TEST_CASE("greedy generation") {
  const Model m = BuildModel(Small(ModelKind::kLinearOnly), 2);
  const auto p = Prompt(6, 97, 1);
  const GenerateResult g = Generate(m, p, 5);
  REQUIRE(g.tokens.size() == 5);
  CHECK(g.tokens[0] == Argmax(Prefill(m, p).logits));
  const float ties[] = {1.0f, 3.0f, 3.0f};
  CHECK(Argmax(ties) == 1);
}

TEST_CASE("throughput arithmetic") {
  const ThroughputReport r = TgsMfuReport(1024, 1.0, 1, 1e6, 1e12);
  CHECK(r.tgs == 1024.0);
  CHECK(r.mfu == doctest::Approx(2.0 * 1e6 * 1024 / 1e12));
  CHECK(TgsMfuReport(1024, 2.0, 1, 1e6, 1e12).tgs == 512.0);
  CHECK(TgsMfuReport(1024, 1.0, 4, 1e6, 1e12).tgs == 256.0);
  CHECK_THROWS_AS(TgsMfuReport(1024, 0.0, 1, 1e6, 1e12), Error);
  CHECK(ToJson(r).contains("tgs"));
  CHECK(kReferenceTgs == 1558.0);
  CHECK(kReferenceMfu == 0.234);
}

TEST_CASE("log-log slope fit") {
  const double x[] = {1, 2, 4, 8};
  const double y2[] = {3, 12, 48, 192};
  CHECK(FitLogLogSlope(x, y2) == doctest::Approx(2.0));
  const double y1[] = {5, 10, 20, 40};
  CHECK(FitLogLogSlope(x, y1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(FitLogLogSlope(std::span(x).first(1), std::span(y1).first(1)), Error);
}

TEST_CASE("prefill benchmark sanity") {
  const Model m = BuildModel(ModelConfig::ForKind(ModelKind::kLinearOnly, 2, 16, 2, 8, 32, 16), 1);
  const std::size_t lengths[] = {64, 256};
  const BenchmarkResult r = BenchmarkPrefill(m, lengths, 3);
  REQUIRE(r.mean_seconds.size() == 2);
  CHECK(r.mean_seconds[0] > 0.0);
  CHECK(r.mean_seconds[1] > r.mean_seconds[0]);
  CHECK(r.repeats == 3);
  const std::size_t one[] = {64};
  CHECK_THROWS_AS(BenchmarkPrefill(m, one, 3), Error);
  const std::size_t down[] = {256, 64};
  CHECK_THROWS_AS(BenchmarkPrefill(m, down, 3), Error);
}
