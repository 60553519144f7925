// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/model.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <string>

namespace spikelite {
namespace {

using nlohmann::json;

constexpr float kNormEps = 1e-6f;

Tensor RandomNormal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

DenseFFN RandomFfn(std::size_t d_model, std::size_t d_ff, Activation act,
                   std::mt19937_64& rng) {
  DenseFFN f;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d_model));
  f.w_gate = RandomNormal({d_ff, d_model}, in_std, rng);
  f.w_up = RandomNormal({d_ff, d_model}, in_std, rng);
  f.w_down = RandomNormal({d_model, d_ff}, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng);
  f.activation = act;
  return f;
}

void RequireKeys(const json& j, std::initializer_list<const char*> allowed,
                 const char* what) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kFormat, std::string(what) + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end()) {
      throw Error(ErrorCode::kFormat, std::string("unknown ") + what + " field '" + key + "'");
    }
  }
}

json ToJson(const MoeSettings& m) {
  return {{"experts", m.experts},
          {"top_k", m.top_k},
          {"shared", m.shared},
          {"router", RouterFnName(m.router)}};
}

MoeSettings MoeFromJson(const json& j) {
  MoeSettings m;
  m.experts = j.value("experts", m.experts);
  m.top_k = j.value("top_k", m.top_k);
  m.shared = j.value("shared", m.shared);
  m.router = ParseRouterFn(j.value("router", std::string(RouterFnName(m.router))));
  m.Validate();
  return m;
}

template <typename M, typename F>
void VisitImpl(M& model, F&& visit) {
  visit("embedding", model.embedding);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    visit(p + "mixer.norm", layer.mixer.norm_gain);
    for (std::size_t b = 0; b < layer.mixer.branches.size(); ++b) {
      auto& a = layer.mixer.branches[b];
      const std::string bp = p + "mixer.b" + std::to_string(b) + ".";
      visit(bp + "wq", a.wq);
      visit(bp + "wk", a.wk);
      visit(bp + "wv", a.wv);
      visit(bp + "wo", a.wo);
      if (!a.gate_down.empty()) {
        visit(bp + "gate_down", a.gate_down);
        visit(bp + "gate_up", a.gate_up);
        visit(bp + "gate_bias", a.gate_bias);
      }
      if (!a.sinks.empty()) visit(bp + "sinks", a.sinks);
    }
    visit(p + "ffn_norm", layer.ffn_norm);
    auto visit_ffn = [&](const std::string& fp, auto& f) {
      visit(fp + "w_gate", f.w_gate);
      visit(fp + "w_up", f.w_up);
      visit(fp + "w_down", f.w_down);
    };
    if (layer.dense) visit_ffn(p + "ffn.", *layer.dense);
    if (layer.moe) {
      for (std::size_t e = 0; e < layer.moe->experts.size(); ++e)
        visit_ffn(p + "moe.experts." + std::to_string(e) + ".", layer.moe->experts[e]);
      for (std::size_t s = 0; s < layer.moe->shared.size(); ++s)
        visit_ffn(p + "moe.shared." + std::to_string(s) + ".", layer.moe->shared[s]);
      visit(p + "moe.router", layer.moe->router_w);
    }
  }
  visit("final_norm", model.final_norm);
  visit("lm_head", model.lm_head);
}

Tensor Embed(const Model& model, std::span<const std::int32_t> tokens) {
  const std::size_t d = model.config.d_model;
  Tensor h({tokens.size(), d});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::int32_t id = tokens[t];
    if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab) {
      throw Error(ErrorCode::kInvalidArgument,
                  "token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(model.config.vocab));
    }
    std::span<const float> row = model.embedding.slice({static_cast<std::size_t>(id)});
    std::copy(row.begin(), row.end(), h.slice({t}).begin());
  }
  return h;
}

void FfnSublayer(const Layer& layer, std::span<float> h, const MatVecFn& matvec) {
  std::vector<float> xn(h.begin(), h.end());
  RmsNormInPlace(xn, xn.size(), kNormEps, layer.ffn_norm.data());
  const std::vector<float> y = layer.dense ? FfnForward(*layer.dense, xn, matvec)
                                           : MoeForward(xn, *layer.moe, matvec);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += y[i];
}

std::vector<float> Head(const Model& model, std::span<const float> h) {
  std::vector<float> xn(h.begin(), h.end());
  RmsNormInPlace(xn, xn.size(), kNormEps, model.final_norm.data());
  std::vector<float> logits(model.config.vocab);
  MatVec(model.lm_head, xn, logits);
  return logits;
}

// Runs the first `stop` layers over the whole sequence.
Tensor RunLayers(const Model& model, Tensor h, std::size_t stop,
                 const MatVecFn& matvec, std::vector<LayerCache>* caches) {
  const AttentionGeometry geom = model.config.geometry();
  for (std::size_t l = 0; l < stop; ++l) {
    const Layer& layer = model.layers[l];
    h = ResidualMixer(h, layer.spec, layer.mixer, geom, matvec,
                      caches ? &(*caches)[l] : nullptr);
    for (std::size_t t = 0; t < h.dim(0); ++t) FfnSublayer(layer, h.slice({t}), matvec);
  }
  return h;
}

LayerSpec SpecFromName(std::string_view name, std::size_t window,
                       std::size_t sink_count, GateKind gate) {
  LayerSpec s;
  s.attention = ParseAttentionKind(name);
  if (HasSliding(s.attention)) s.window = window;
  if (HasFull(s.attention)) s.sink_count = sink_count;
  s.gate = gate;
  return s;
}

}  // namespace

void MoeSettings::Validate() const {
  if (experts == 0 || top_k == 0 || top_k > experts) {
    throw Error(ErrorCode::kInvalidArgument,
                "MoE needs 1 <= top_k <= experts, got top_k=" + std::to_string(top_k) +
                    " experts=" + std::to_string(experts));
  }
}

void SpikeSettings::Validate() const {
  if (!(k > 0.0f) || !std::isfinite(k)) {
    throw Error(ErrorCode::kInvalidArgument, "spike k must be positive and finite");
  }
  if (bits < 2 || bits > 31) {
    throw Error(ErrorCode::kInvalidArgument, "bit width must be in [2, 31]");
  }
}

void ModelConfig::Validate() const {
  if (depth == 0 || d_model == 0 || heads == 0 || d_head == 0 || vocab == 0 ||
      d_ff == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be positive");
  }
  if (d_model != heads * d_head) {
    throw Error(ErrorCode::kDimension,
                "d_model (" + std::to_string(d_model) + ") != heads x d_head (" +
                    std::to_string(heads) + " x " + std::to_string(d_head) + ")");
  }
  if (layout.size() != depth) {
    throw Error(ErrorCode::kDimension, "layout has " + std::to_string(layout.size()) +
                                           " layers, depth is " + std::to_string(depth));
  }
  for (const LayerSpec& s : layout) {
    s.Validate();
    if (s.ffn == FfnKind::kMoe && !moe) {
      throw Error(ErrorCode::kInvalidArgument, "layout uses MoE but no moe settings given");
    }
  }
  if (moe) moe->Validate();
  if (spike) spike->Validate();
  if (chunk == 0) throw Error(ErrorCode::kInvalidArgument, "chunk must be >= 1");
  if (!(rope_base > 0.0f)) throw Error(ErrorCode::kInvalidArgument, "rope_base must be > 0");
}

AttentionGeometry ModelConfig::geometry() const {
  return {d_model, heads, d_head, linear_norm, chunk, rope_base};
}

ModelConfig ModelConfig::ForKind(ModelKind kind, std::size_t depth,
                                 std::size_t d_model, std::size_t heads,
                                 std::size_t d_head, std::size_t vocab,
                                 std::size_t d_ff) {
  ModelConfig c;
  c.depth = depth;
  c.d_model = d_model;
  c.heads = heads;
  c.d_head = d_head;
  c.vocab = vocab;
  c.d_ff = d_ff;
  LayoutOverrides o;
  o.window = c.window;
  if (kind == ModelKind::k76BLike) o.sink_count = c.sink_count;
  c.layout = BuildLayout(kind, depth, o);
  for (const LayerSpec& s : c.layout)
    if (s.ffn == FfnKind::kMoe) c.moe = MoeSettings{};
  return c;
}

json ToJson(const ModelConfig& c) {
  json layout = json::array();
  for (const LayerSpec& s : c.layout) layout.push_back(ToJson(s));
  json j = {
      {"depth", c.depth},
      {"d_model", c.d_model},
      {"heads", c.heads},
      {"d_head", c.d_head},
      {"vocab", c.vocab},
      {"d_ff", c.d_ff},
      {"layout", layout},
      {"moe", nullptr},
      {"window", c.window},
      {"sink_count", c.sink_count},
      {"spike", nullptr},
      {"activation", ActivationName(c.activation)},
      {"linear_norm", OutputNormName(c.linear_norm)},
      {"chunk", c.chunk},
      {"rope_base", c.rope_base},
  };
  if (c.moe) j["moe"] = ToJson(*c.moe);
  if (c.spike) {
    j["spike"] = {{"k", c.spike->k},
                  {"scheme", SchemeName(c.spike->scheme)},
                  {"granularity", GranularityName(c.spike->granularity)},
                  {"bits", c.spike->bits}};
  }
  return j;
}

ModelConfig ModelConfigFromJson(const json& j) {
  try {
    RequireKeys(j,
                {"depth", "d_model", "heads", "d_head", "vocab", "d_ff", "layout",
                 "family", "gate", "moe", "window", "sink_count", "spike",
                 "activation", "linear_norm", "chunk", "rope_base"},
                "config");
    ModelConfig c;
    c.depth = j.at("depth").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.d_head = j.at("d_head").get<std::size_t>();
    c.vocab = j.at("vocab").get<std::size_t>();
    c.d_ff = j.value("d_ff", c.d_ff);
    c.window = j.value("window", c.window);
    c.sink_count = j.value("sink_count", c.sink_count);
    c.activation = ParseActivation(j.value("activation", std::string("silu")));
    c.linear_norm = ParseOutputNorm(j.value("linear_norm", std::string("rms")));
    c.chunk = j.value("chunk", c.chunk);
    c.rope_base = j.value("rope_base", c.rope_base);
    if (j.contains("moe") && !j["moe"].is_null()) c.moe = MoeFromJson(j["moe"]);
    if (j.contains("spike") && !j["spike"].is_null()) {
      const json& s = j["spike"];
      SpikeSettings sp;
      sp.k = s.value("k", sp.k);
      sp.scheme = ParseScheme(s.value("scheme", std::string(SchemeName(sp.scheme))));
      sp.granularity = ParseGranularity(
          s.value("granularity", std::string(GranularityName(sp.granularity))));
      sp.bits = s.value("bits", sp.bits);
      c.spike = sp;
    }
    if (j.contains("layout")) {
      if (j.contains("family")) {
        throw Error(ErrorCode::kFormat, "config gives both layout and family");
      }
      for (const json& s : j["layout"]) c.layout.push_back(LayerSpecFromJson(s));
    } else if (j.contains("family")) {
      const ModelKind kind = ParseModelKind(j["family"].get<std::string>());
      LayoutOverrides o;
      o.window = c.window;
      if (j.contains("sink_count") || kind == ModelKind::k76BLike)
        o.sink_count = c.sink_count;
      if (j.contains("gate")) o.gate = ParseGateKind(j["gate"].get<std::string>());
      c.layout = BuildLayout(kind, c.depth, o);
      bool any_moe = false;
      for (const LayerSpec& s : c.layout) any_moe |= s.ffn == FfnKind::kMoe;
      if (any_moe && !c.moe) c.moe = MoeSettings{};
    } else {
      throw Error(ErrorCode::kFormat, "config needs a layout or a family");
    }
    c.Validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad config: ") + e.what());
  }
}

std::size_t Model::ParameterCount() const {
  std::size_t n = 0;
  VisitTensors(*this, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

std::size_t Model::ActiveParameterCount() const {
  std::size_t n = ParameterCount() - embedding.size();
  for (const Layer& l : layers) {
    if (!l.moe || l.moe->experts.empty()) continue;
    const DenseFFN& e = l.moe->experts.front();
    const std::size_t per = e.w_gate.size() + e.w_up.size() + e.w_down.size();
    n -= (l.moe->experts.size() - l.moe->top_k) * per;
  }
  return n;
}

void VisitTensors(Model& model, const TensorVisitor& visit) {
  VisitImpl(model, visit);
}

void VisitTensors(const Model& model, const ConstTensorVisitor& visit) {
  VisitImpl(model, visit);
}

Model BuildModel(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  const AttentionGeometry geom = config.geometry();
  const std::size_t d = config.d_model;
  Model m;
  m.config = config;
  m.embedding = RandomNormal({config.vocab, d}, 1.0, rng);
  for (const LayerSpec& spec : config.layout) {
    Layer layer;
    layer.spec = spec;
    layer.mixer = InitMixerParams(spec, geom, rng);
    layer.ffn_norm = Tensor::Full({d}, 1.0f);
    if (spec.ffn == FfnKind::kDense) {
      layer.dense = RandomFfn(d, config.d_ff, config.activation, rng);
    } else {
      MoELayer moe;
      for (std::size_t e = 0; e < config.moe->experts; ++e)
        moe.experts.push_back(RandomFfn(d, config.d_ff, config.activation, rng));
      for (std::size_t s = 0; s < config.moe->shared; ++s)
        moe.shared.push_back(RandomFfn(d, config.d_ff, config.activation, rng));
      moe.router_w = RandomNormal({config.moe->experts, d},
                                  1.0 / std::sqrt(static_cast<double>(d)), rng);
      moe.top_k = config.moe->top_k;
      moe.sigma = config.moe->router;
      layer.moe = std::move(moe);
    }
    m.layers.push_back(std::move(layer));
  }
  m.final_norm = Tensor::Full({d}, 1.0f);
  m.lm_head = RandomNormal({config.vocab, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return m;
}

SpikeProjector::SpikeProjector(SpikeSettings settings, bool collect_stats,
                               std::size_t window)
    : settings_(settings), collect_stats_(collect_stats), acc_(window) {
  settings_.Validate();
}

void SpikeProjector::Apply(const Tensor& w, std::span<const float> x,
                           std::span<float> y) {
  auto it = quantized_.find(&w);
  if (it == quantized_.end()) it = quantized_.emplace(&w, QuantizeWeights(w)).first;
  const QuantizedMatrix& q = it->second;
  if (x.size() != q.cols || y.size() != q.rows) {
    throw Error(ErrorCode::kDimension, "spike projection shape mismatch");
  }
  const Tensor input({1, x.size()}, std::vector<float>(x.begin(), x.end()));
  const SpikeCountTensor counts = SpikeEncode(input, settings_.k, settings_.granularity);
  const Tensor out = W8SpikeProject(q, counts);
  std::copy(out.data().begin(), out.data().end(), y.begin());
  if (collect_stats_) {
    const std::optional<int> bits =
        IsBitwise(settings_.scheme) ? std::optional<int>(settings_.bits) : std::nullopt;
    acc_.Add(counts, Expand(counts, settings_.scheme, bits));
  }
  ++projections_;
}

MatVecFn SpikeProjector::fn() {
  return [this](const Tensor& w, std::span<const float> x, std::span<float> y) {
    Apply(w, x, y);
  };
}

PrefillResult Prefill(const Model& model, std::span<const std::int32_t> tokens,
                      const MatVecFn& matvec) {
  if (tokens.empty()) throw Error(ErrorCode::kEmptyInput, "prefill needs at least one token");
  PrefillResult r;
  r.caches.resize(model.layers.size());
  const Tensor h = RunLayers(model, Embed(model, tokens), model.layers.size(), matvec,
                             &r.caches);
  r.logits = Head(model, h.slice({tokens.size() - 1}));
  return r;
}

std::vector<float> DecodeStep(const Model& model, std::int32_t token,
                              std::vector<LayerCache>& caches,
                              const MatVecFn& matvec) {
  if (caches.size() != model.layers.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "cache/model mismatch: " + std::to_string(caches.size()) +
                    " caches for " + std::to_string(model.layers.size()) + " layers");
  }
  const AttentionGeometry geom = model.config.geometry();
  const std::int32_t one[] = {token};
  std::vector<float> h = Embed(model, one).vec();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const Layer& layer = model.layers[l];
    std::vector<float> xn = h;
    RmsNormInPlace(xn, xn.size(), kNormEps, layer.mixer.norm_gain.data());
    const std::vector<float> mix = MixerStep(layer.spec, layer.mixer, geom, xn, caches[l], matvec);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += mix[i];
    FfnSublayer(layer, h, matvec);
  }
  return Head(model, h);
}

std::size_t CacheBytes(const std::vector<LayerCache>& caches) {
  std::size_t total = 0;
  for (const LayerCache& c : caches) total += c.bytes();
  return total;
}

Tensor LayerInput(const Model& model, std::span<const std::int32_t> tokens,
                  std::size_t layer) {
  if (layer >= model.layers.size()) {
    throw Error(ErrorCode::kInvalidArgument, "layer index out of range");
  }
  Tensor h = RunLayers(model, Embed(model, tokens), layer, {}, nullptr);
  RmsNormInPlace(h.data(), model.config.d_model, kNormEps,
                 model.layers[layer].mixer.norm_gain.data());
  return h;
}

std::int32_t Argmax(std::span<const float> logits) {
  if (logits.empty()) throw Error(ErrorCode::kEmptyInput, "argmax of empty logits");
  return static_cast<std::int32_t>(std::max_element(logits.begin(), logits.end()) -
                                   logits.begin());
}

GenerateResult Generate(const Model& model, std::span<const std::int32_t> prompt,
                        std::size_t steps, const MatVecFn& matvec) {
  PrefillResult p = Prefill(model, prompt, matvec);
  GenerateResult g;
  g.last_logits = std::move(p.logits);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::int32_t next = Argmax(g.last_logits);
    g.tokens.push_back(next);
    if (s + 1 < steps) g.last_logits = DecodeStep(model, next, p.caches, matvec);
  }
  return g;
}

ConversionPlan PlanFromJson(const json& j, const ModelConfig& source) {
  try {
    RequireKeys(j, {"layers", "family", "target", "window", "sink_count", "gate", "seed", "moe"},
                "plan");
    const int forms = static_cast<int>(j.contains("layers")) +
                      static_cast<int>(j.contains("family")) +
                      static_cast<int>(j.contains("target"));
    if (forms != 1) {
      throw Error(ErrorCode::kFormat, "plan needs exactly one of layers, family, target");
    }
    ConversionPlan plan;
    plan.seed = j.value("seed", std::uint64_t{0});
    const std::size_t window = j.value("window", source.window);
    const GateKind gate = ParseGateKind(j.value("gate", std::string("low_rank")));
    std::size_t sink_count = j.value("sink_count", std::size_t{0});

    if (j.contains("family")) {
      const ModelKind kind = ParseModelKind(j["family"].get<std::string>());
      LayoutOverrides o;
      o.window = window;
      o.gate = gate;
      if (kind == ModelKind::k76BLike && !j.contains("sink_count")) sink_count = kDefaultSinkCount;
      o.sink_count = sink_count;
      plan.layers = BuildLayout(kind, source.depth, o);
    } else if (j.contains("target")) {
      plan.layers.assign(source.depth,
                         SpecFromName(j["target"].get<std::string>(), window, sink_count, gate));
    } else {
      for (const json& entry : j["layers"]) {
        plan.layers.push_back(entry.is_string()
                                  ? SpecFromName(entry.get<std::string>(), window, sink_count, gate)
                                  : LayerSpecFromJson(entry));
      }
    }
    if (plan.layers.size() != source.depth) {
      throw Error(ErrorCode::kDimension, "plan covers " + std::to_string(plan.layers.size()) +
                                             " layers, source has " +
                                             std::to_string(source.depth));
    }
    if (j.contains("moe") && !j["moe"].is_null()) {
      json m = j["moe"];
      std::optional<json> layers;
      if (m.contains("layers")) {
        layers = m["layers"];
        m.erase("layers");
      }
      RequireKeys(m, {"experts", "top_k", "shared", "router"}, "plan moe");
      plan.moe = MoeFromJson(m);
      if (layers && layers->is_array()) {
        for (LayerSpec& s : plan.layers) s.ffn = FfnKind::kDense;
        for (const json& idx : *layers) {
          const auto i = idx.get<std::size_t>();
          if (i >= plan.layers.size()) {
            throw Error(ErrorCode::kDimension, "MoE layer index " + std::to_string(i) +
                                                   " outside the model");
          }
          plan.layers[i].ffn = FfnKind::kMoe;
        }
      } else if (!j.contains("family") || (layers && *layers == "all")) {
        for (LayerSpec& s : plan.layers) s.ffn = FfnKind::kMoe;
      }
    } else {
      for (const LayerSpec& s : plan.layers)
        if (s.ffn == FfnKind::kMoe) plan.moe = MoeSettings{};
    }
    for (const LayerSpec& s : plan.layers) s.Validate();
    return plan;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad plan: ") + e.what());
  }
}

json ToJson(const ConversionSummary& summary) {
  json out = json::array();
  for (const LayerConversion& c : summary) {
    json row = {{"layer", c.layer}, {"from", c.from}, {"to", c.to}, {"ffn", c.ffn},
                {"scaling_factor", nullptr}};
    if (c.scaling_factor) row["scaling_factor"] = *c.scaling_factor;
    out.push_back(row);
  }
  return out;
}

Model ConvertFromSoftmax(const Model& source, const ConversionPlan& plan,
                         ConversionSummary* summary) {
  source.config.Validate();
  for (const Layer& l : source.layers) {
    if (l.spec.attention != AttentionKind::kFull || !l.dense) {
      throw Error(ErrorCode::kInvalidArgument,
                  "conversion expects a softmax-attention source with dense FFNs");
    }
  }
  if (plan.layers.size() != source.layers.size()) {
    throw Error(ErrorCode::kDimension, "plan covers " + std::to_string(plan.layers.size()) +
                                           " layers, source has " +
                                           std::to_string(source.layers.size()));
  }
  Model out;
  out.config = source.config;
  out.config.layout = plan.layers;
  out.config.moe = plan.moe;
  for (const LayerSpec& s : plan.layers) {
    if (s.window) {
      out.config.window = *s.window;
      break;
    }
  }
  out.config.Validate();
  const AttentionGeometry geom = out.config.geometry();
  std::mt19937_64 rng(plan.seed);
  if (summary) summary->clear();

  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const Layer& src = source.layers[i];
    const AttentionParams& sp = src.mixer.branches.front();
    const LayerSpec& target = plan.layers[i];
    Layer dst;
    dst.spec = target;
    dst.mixer.norm_gain = src.mixer.norm_gain;
    for (const BranchSpec& b : BranchesOf(target)) {
      AttentionParams p = InitAttentionParams(b, geom, rng);
      p.wq = sp.wq;
      p.wk = sp.wk;
      p.wv = sp.wv;
      p.wo = sp.wo;
      if (b.kind == MechanismKind::kFull && b.sink_count > 0 &&
          b.sink_count == src.spec.sink_count)
        p.sinks = sp.sinks;
      dst.mixer.branches.push_back(std::move(p));
    }
    dst.ffn_norm = src.ffn_norm;
    LayerConversion row{i, AttentionKindName(src.spec.attention),
                        AttentionKindName(target.attention), FfnKindName(target.ffn), {}};
    if (target.ffn == FfnKind::kDense) {
      dst.dense = src.dense;
    } else {
      const MoeSettings& m = *plan.moe;
      dst.moe = Upcycle(*src.dense, m.experts, m.top_k, m.shared, plan.seed + 1 + i, m.router);
      row.scaling_factor = ScalingFactor(m.experts, m.top_k, m.shared);
    }
    if (summary) summary->push_back(row);
    out.layers.push_back(std::move(dst));
  }
  out.embedding = source.embedding;
  out.final_norm = source.final_norm;
  out.lm_head = source.lm_head;
  return out;
}

double FitLogLogSlope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "slope fit needs at least two paired points");
  }
  double mx = 0, my = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) {
      throw Error(ErrorCode::kDomain, "log-log fit needs positive values");
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    mx += lx.back();
    my += ly.back();
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0) throw Error(ErrorCode::kDomain, "slope fit needs distinct lengths");
  return sxy / sxx;
}

std::vector<std::int32_t> SyntheticTokens(std::size_t n, std::size_t vocab,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> dist(0, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> tokens(n);
  for (std::int32_t& t : tokens) t = dist(rng);
  return tokens;
}

BenchmarkResult BenchmarkPrefill(const Model& model,
                                 std::span<const std::size_t> lengths,
                                 std::size_t repeats, std::uint64_t seed) {
  if (lengths.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two lengths to fit an exponent");
  }
  if (repeats < 1) throw Error(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] == 0 || (i > 0 && lengths[i] <= lengths[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "lengths must be positive and ascending");
    }
  }
  BenchmarkResult r;
  r.repeats = repeats;
  std::vector<double> xs;
  for (std::size_t n : lengths) {
    const auto tokens = SyntheticTokens(n, model.config.vocab, seed);
    double total = 0.0;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const PrefillResult p = Prefill(model, tokens);
      const auto t1 = std::chrono::steady_clock::now();
      total += std::chrono::duration<double>(t1 - t0).count();
    }
    r.lengths.push_back(n);
    r.mean_seconds.push_back(total / static_cast<double>(repeats));
    xs.push_back(static_cast<double>(n));
  }
  r.exponent = FitLogLogSlope(xs, r.mean_seconds);
  return r;
}

ThroughputReport TgsMfuReport(double tokens, double seconds, std::size_t devices,
                              double params, double peak_flops) {
  if (!(seconds > 0.0)) throw Error(ErrorCode::kInvalidArgument, "elapsed time must be > 0");
  if (devices == 0) throw Error(ErrorCode::kInvalidArgument, "device count must be >= 1");
  if (!(peak_flops > 0.0)) throw Error(ErrorCode::kInvalidArgument, "peak FLOPs must be > 0");
  if (tokens < 0.0 || params < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "tokens and params must be non-negative");
  }
  ThroughputReport r;
  r.tgs = tokens / seconds / static_cast<double>(devices);
  // Forward only: 2 FLOPs per parameter per token.
  r.mfu = 2.0 * params * tokens / seconds / (peak_flops * static_cast<double>(devices));
  return r;
}

json ToJson(const BenchmarkResult& r) {
  return {{"lengths", r.lengths},
          {"mean_seconds", r.mean_seconds},
          {"repeats", r.repeats},
          {"exponent", r.exponent}};
}

json ToJson(const ThroughputReport& r) {
  return {{"tgs", r.tgs},
          {"mfu", r.mfu},
          {"reference", {{"tgs", kReferenceTgs}, {"mfu", kReferenceMfu}}}};
}

}  // namespace spikelite
