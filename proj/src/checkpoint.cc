// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/checkpoint.h"

#include <map>
#include <set>

#include "byte_io.h"
#include "spikelite/quantizer.h"

namespace spikelite {
namespace {

using nlohmann::json;

bool StoredAsInt8(const std::string& name, const Tensor& t) {
  if (t.rank() != 2 || name == "embedding") return false;
  return name.size() < 5 || name.compare(name.size() - 5, 5, "sinks") != 0;
}

struct Record {
  std::string dtype;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
  std::string scale;
};

std::map<std::string, Record> ParseRecords(const json& tensors, std::size_t payload) {
  std::map<std::string, Record> records;
  for (const json& t : tensors) {
    Record r;
    const auto name = t.at("name").get<std::string>();
    r.dtype = t.at("dtype").get<std::string>();
    r.shape = t.at("shape").get<Shape>();
    r.offset = t.at("offset").get<std::uint64_t>();
    r.nbytes = t.at("nbytes").get<std::uint64_t>();
    if (t.contains("scale")) r.scale = t["scale"].get<std::string>();
    const std::uint64_t width = r.dtype == "f32" ? 4 : r.dtype == "i8" ? 1 : 0;
    if (width == 0) throw Error(ErrorCode::kFormat, "tensor '" + name + "' has dtype " + r.dtype);
    if (r.nbytes != ShapeSize(r.shape) * width || r.offset > payload ||
        r.nbytes > payload - r.offset) {
      throw Error(ErrorCode::kFormat, "tensor '" + name + "' does not resolve inside the payload");
    }
    if (!records.emplace(name, r).second) {
      throw Error(ErrorCode::kFormat, "duplicate tensor '" + name + "'");
    }
  }
  return records;
}

}  // namespace

std::string SerializeCheckpoint(const Model& model, const SaveOptions& options) {
  std::string payload;
  json tensors = json::array();
  auto add_f32 = [&](const std::string& name, const Tensor& t) {
    tensors.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape()},
                       {"offset", payload.size()}, {"nbytes", t.size() * 4}});
    for (float v : t.data()) internal::PutF32(payload, v);
  };
  VisitTensors(model, [&](const std::string& name, const Tensor& t) {
    if (!options.int8_weights || !StoredAsInt8(name, t)) {
      add_f32(name, t);
      return;
    }
    const QuantizedMatrix q = QuantizeWeights(t);
    tensors.push_back({{"name", name}, {"dtype", "i8"}, {"shape", t.shape()},
                       {"offset", payload.size()}, {"nbytes", q.q.size()},
                       {"scale", name + ".scale"}});
    for (std::int8_t v : q.q) payload.push_back(static_cast<char>(v));
    add_f32(name + ".scale", Tensor({q.rows}, q.scale));
  });
  json merge = json::array();
  for (const Layer& l : model.layers) merge.push_back({l.mixer.merge.w1, l.mixer.merge.w2});
  const json manifest = {{"format", "spikelite-checkpoint"},
                         {"config", ToJson(model.config)},
                         {"merge", merge},
                         {"metadata", options.metadata},
                         {"tensors", tensors}};
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic);
  internal::PutLe(out, kCheckpointVersion);
  internal::PutLe(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

namespace {

// Splits the container into manifest and payload after validating the header.
std::pair<json, std::string_view> SplitContainer(std::string_view bytes) {
  internal::ByteReader r(bytes);
  if (r.remaining() < kCheckpointMagic.size() ||
      r.Take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(ErrorCode::kFormat, "not a checkpoint (bad magic)");
  }
  const auto version = r.Le<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = r.Le<std::uint64_t>();
  if (length > r.remaining()) throw Error(ErrorCode::kFormat, "manifest length exceeds file");
  json manifest;
  try {
    manifest = json::parse(r.Take(static_cast<std::size_t>(length)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("unreadable manifest: ") + e.what());
  }
  return {std::move(manifest), bytes.substr(r.pos())};
}

}  // namespace

json ReadManifest(std::string_view bytes) { return SplitContainer(bytes).first; }

Model ParseCheckpoint(std::string_view bytes, json* metadata) {
  auto [manifest, payload] = SplitContainer(bytes);
  try {
    const ModelConfig config = ModelConfigFromJson(manifest.at("config"));
    std::map<std::string, Record> records = ParseRecords(manifest.at("tensors"), payload.size());
    Model model = BuildModel(config, 0);
    std::set<std::string> used;
    VisitTensors(model, [&](const std::string& name, Tensor& t) {
      auto it = records.find(name);
      if (it == records.end()) throw Error(ErrorCode::kFormat, "missing tensor '" + name + "'");
      const Record& rec = it->second;
      if (rec.shape != t.shape()) {
        throw Error(ErrorCode::kFormat, "tensor '" + name + "' has shape " +
                                            ShapeString(rec.shape) + ", config implies " +
                                            ShapeString(t.shape()));
      }
      used.insert(name);
      internal::ByteReader r(payload.substr(rec.offset, rec.nbytes));
      if (rec.dtype == "f32") {
        for (float& v : t.data()) v = r.F32();
        return;
      }
      auto sit = records.find(rec.scale);
      if (t.rank() != 2 || sit == records.end() || sit->second.dtype != "f32" ||
          sit->second.shape != Shape{t.dim(0)}) {
        throw Error(ErrorCode::kFormat, "int8 tensor '" + name + "' lacks a valid scale");
      }
      used.insert(rec.scale);
      internal::ByteReader sr(payload.substr(sit->second.offset, sit->second.nbytes));
      for (std::size_t row = 0; row < t.dim(0); ++row) {
        const float scale = sr.F32();
        for (float& v : t.slice({row}))
          v = scale * static_cast<float>(static_cast<std::int8_t>(r.Le<std::uint8_t>()));
      }
    });
    if (used.size() != records.size()) {
      throw Error(ErrorCode::kFormat, "checkpoint has tensors the config does not use");
    }
    if (manifest.contains("merge")) {
      const json& merge = manifest["merge"];
      if (merge.size() != model.layers.size()) {
        throw Error(ErrorCode::kFormat, "merge weights do not match depth");
      }
      for (std::size_t i = 0; i < merge.size(); ++i) {
        model.layers[i].mixer.merge.w1 = merge[i].at(0).get<float>();
        model.layers[i].mixer.merge.w2 = merge[i].at(1).get<float>();
      }
    }
    if (metadata) *metadata = manifest.value("metadata", json::object());
    return model;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad manifest: ") + e.what());
  }
}

void SaveCheckpoint(const Model& model, const std::string& path, const SaveOptions& options) {
  internal::WriteFile(path, SerializeCheckpoint(model, options));
}

Model LoadCheckpoint(const std::string& path, json* metadata) {
  return ParseCheckpoint(internal::ReadFile(path), metadata);
}

}  // namespace spikelite
