// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// Thin pybind11 layer. Arrays cross as float32 numpy arrays; structured
// documents cross as JSON text and are decoded on the Python side.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spikelite/analyzer.h"
#include "spikelite/attention.h"
#include "spikelite/checkpoint.h"
#include "spikelite/model.h"
#include "spikelite/moe.h"
#include "spikelite/quantizer.h"
#include "spikelite/spike_codec.h"

namespace py = pybind11;
using namespace spikelite;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor ToTensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray ToArray(const Tensor& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

AttentionInputs Inputs(const FloatArray& q, const FloatArray& k, const FloatArray& v) {
  return {ToTensor(q), ToTensor(k), ToTensor(v)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "spikelite native core";

  py::register_exception<Error>(m, "SpikeliteError", PyExc_ValueError);

  m.def("softmax_attention", [](const FloatArray& q, const FloatArray& k, const FloatArray& v,
                                std::size_t sinks) {
    return ToArray(SoftmaxAttention(Inputs(q, k, v), sinks));
  }, py::arg("q"), py::arg("k"), py::arg("v"), py::arg("sink_count") = 0);
  m.def("sliding_window_attention", [](const FloatArray& q, const FloatArray& k,
                                       const FloatArray& v, std::size_t w) {
    return ToArray(SlidingWindowAttention(Inputs(q, k, v), w));
  });
  m.def("gla", [](const FloatArray& q, const FloatArray& k, const FloatArray& v,
                  const FloatArray& g, const std::string& form, std::size_t chunk,
                  const std::string& norm) {
    const AttentionInputs in = Inputs(q, k, v);
    const GateVector gate{ToTensor(g)};
    const OutputNorm n = ParseOutputNorm(norm);
    if (form == "recurrent") return ToArray(GlaRecurrent(in, gate, n));
    if (form == "parallel") return ToArray(GlaParallel(in, gate, n));
    if (form == "chunkwise") return ToArray(GlaChunkwise(in, gate, chunk, n));
    throw Error(ErrorCode::kInvalidArgument, "unknown form '" + form + "'");
  }, py::arg("q"), py::arg("k"), py::arg("v"), py::arg("g"), py::arg("form") = "chunkwise",
     py::arg("chunk") = 64, py::arg("norm") = "none");

  m.def("spike_encode", [](const FloatArray& x, float k, const std::string& granularity) {
    const SpikeCountTensor c = SpikeEncode(ToTensor(x), k, ParseGranularity(granularity));
    py::array_t<std::int32_t> counts(std::vector<py::ssize_t>(c.shape.begin(), c.shape.end()));
    std::copy(c.counts.begin(), c.counts.end(), counts.mutable_data());
    return py::make_tuple(counts, ToArray(c.v_th));
  }, py::arg("x"), py::arg("k"), py::arg("granularity") = "per_token");
  m.def("expand_collapse", [](const std::vector<std::int32_t>& counts, const std::string& scheme,
                              std::optional<int> bits) {
    const SpikeTrain t = ExpandCounts(counts, counts.size(), ParseScheme(scheme), bits);
    return py::make_tuple(t.timesteps, t.NonZeroEvents(), Collapse(t));
  }, py::arg("counts"), py::arg("scheme"), py::arg("bits") = std::nullopt);
  m.def("firing_stats_json", [](const FloatArray& x, float k, std::size_t window) {
    return ToJson(ComputeFiringStats(SpikeEncode(ToTensor(x), k), nullptr, window)).dump();
  }, py::arg("x"), py::arg("k"), py::arg("window") = kDefaultSparsityWindow);
  m.def("energy_report_json", [](double avg) { return ToJson(ComputeEnergyReport(avg)).dump(); });

  m.def("quantize_weights", [](const FloatArray& w) {
    const QuantizedMatrix q = QuantizeWeights(ToTensor(w));
    py::array_t<std::int8_t> values({static_cast<py::ssize_t>(q.rows), static_cast<py::ssize_t>(q.cols)});
    std::copy(q.q.begin(), q.q.end(), values.mutable_data());
    return py::make_tuple(values, q.scale);
  });
  m.def("scaling_factor", &ScalingFactor, py::arg("num_experts"), py::arg("top_k"),
        py::arg("num_shared"));

  py::class_<Model>(m, "Model")
      .def_static("build", [](const std::string& config_json, std::uint64_t seed) {
        return BuildModel(ModelConfigFromJson(nlohmann::json::parse(config_json)), seed);
      }, py::arg("config_json"), py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return LoadCheckpoint(path); })
      .def("save", [](const Model& self, const std::string& path, bool int8) {
        SaveCheckpoint(self, path, {.int8_weights = int8});
      }, py::arg("path"), py::arg("int8") = false)
      .def("config_json", [](const Model& self) { return ToJson(self.config).dump(); })
      .def("parameter_count", &Model::ParameterCount)
      .def("prefill_logits", [](const Model& self, const std::vector<std::int32_t>& tokens) {
        return Prefill(self, tokens).logits;
      })
      .def("generate", [](const Model& self, const std::vector<std::int32_t>& prompt,
                          std::size_t steps, std::optional<float> spike_k) {
        std::optional<SpikeProjector> proj;
        if (spike_k) proj.emplace(SpikeSettings{.k = *spike_k});
        const GenerateResult g = Generate(self, prompt, steps, proj ? proj->fn() : MatVecFn{});
        const std::string stats = proj ? ToJson(proj->stats()).dump() : "";
        return py::make_tuple(g.tokens, g.last_logits, stats);
      }, py::arg("prompt"), py::arg("steps"), py::arg("spike_k") = std::nullopt)
      .def("convert", [](const Model& self, const std::string& plan_json) {
        ConversionSummary summary;
        Model out = ConvertFromSoftmax(
            self, PlanFromJson(nlohmann::json::parse(plan_json), self.config), &summary);
        return py::make_tuple(std::move(out), ToJson(summary).dump());
      });
}
