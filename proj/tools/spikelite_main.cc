// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

// spikelite: build, convert, run and benchmark toy hybrid models, and turn
// activation tensors into spike rasters.
//
// Exit codes: 0 ok, 2 usage or validation, 3 I/O, 4 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spikelite/analyzer.h"
#include "spikelite/checkpoint.h"
#include "spikelite/model.h"
#include "spikelite/spike_codec.h"
#include "spikelite/tensor_file.h"

namespace {

using nlohmann::json;
using namespace spikelite;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return kExitIo;
    case ErrorCode::kNonFinite:
    case ErrorCode::kOverflow: return kExitNumeric;
    default: return kExitUsage;
  }
}

void CheckWritable(const std::string& path, bool force) {
  if (!force && std::filesystem::exists(path)) {
    throw Error(ErrorCode::kInvalidArgument,
                "refusing to overwrite '" + path + "' (pass --force)");
  }
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, "'" + path + "' is not valid JSON: " + e.what());
  }
}

void EmitJson(const json& doc, const std::string& out, bool force) {
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  CheckWritable(out, force);
  std::ofstream f(out);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + out + "'");
  f << doc.dump(2) << '\n';
  if (!f) throw Error(ErrorCode::kIo, "write failed for '" + out + "'");
}

std::vector<std::int32_t> ReadTokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open prompt '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  for (char& c : text)
    if (c == ',') c = ' ';
  std::istringstream words(text);
  std::vector<std::int32_t> tokens;
  std::string word;
  while (words >> word) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size() || v < 0 || v > INT32_MAX) {
      throw Error(ErrorCode::kInvalidArgument, "bad token id '" + word + "' in " + path);
    }
    tokens.push_back(static_cast<std::int32_t>(v));
  }
  if (tokens.empty()) throw Error(ErrorCode::kEmptyInput, "prompt '" + path + "' has no tokens");
  return tokens;
}

std::vector<std::size_t> ParseLengths(const std::string& csv) {
  std::vector<std::size_t> lengths;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorCode::kInvalidArgument, "bad length '" + item + "'");
    }
    lengths.push_back(static_cast<std::size_t>(v));
  }
  return lengths;
}

void RequireFiniteLogits(std::span<const float> logits) {
  for (float v : logits)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "non-finite logits");
}

struct SpikeFlags {
  std::optional<float> k;
  std::string scheme;
  std::string granularity;
  int bits = kDefaultBits;
  std::size_t window = kDefaultSparsityWindow;
};

void AddSpikeOptions(CLI::App* cmd, SpikeFlags& f) {
  cmd->add_option("--scheme", f.scheme,
                  "binary | ternary | bitwise_pure | bitwise_bidir | bitwise_twos");
  cmd->add_option("--granularity", f.granularity, "per_token | per_tensor");
  cmd->add_option("--bits", f.bits, "bit width for bitwise schemes")->capture_default_str();
  cmd->add_option("--window", f.window, "sparsity window in timesteps")->capture_default_str();
}

int CmdBuild(const std::string& config_path, std::uint64_t seed, const std::string& out,
             bool force, bool int8) {
  const ModelConfig config = ModelConfigFromJson(ReadJsonFile(config_path));
  CheckWritable(out, force);
  const Model model = BuildModel(config, seed);
  SaveOptions opts;
  opts.int8_weights = int8;
  opts.metadata = {{"seed", seed}};
  SaveCheckpoint(model, out, opts);
  std::cout << json{{"out", out},
                    {"parameters", model.ParameterCount()},
                    {"layout", ToJson(config)["layout"]}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

int CmdConvert(const std::string& src, const std::string& plan_path, const std::string& out,
               std::optional<std::uint64_t> seed, bool force, bool int8) {
  const Model source = LoadCheckpoint(src);
  ConversionPlan plan = PlanFromJson(ReadJsonFile(plan_path), source.config);
  if (seed) plan.seed = *seed;
  CheckWritable(out, force);
  ConversionSummary summary;
  const Model converted = ConvertFromSoftmax(source, plan, &summary);
  SaveOptions opts;
  opts.int8_weights = int8;
  opts.metadata = {{"conversion", ToJson(summary)}, {"source", src}};
  SaveCheckpoint(converted, out, opts);
  std::cout << json{{"out", out}, {"layers", ToJson(summary)}}.dump(2) << '\n';
  return kExitOk;
}

int CmdRun(const std::string& ckpt, const std::string& prompt_path, std::size_t steps,
           const SpikeFlags& flags, const std::string& out, bool force) {
  const Model model = LoadCheckpoint(ckpt);
  const std::vector<std::int32_t> prompt = ReadTokens(prompt_path);
  json doc = {{"prompt_length", prompt.size()}, {"steps", steps}};

  std::optional<SpikeProjector> projector;
  if (flags.k) {
    SpikeSettings s = model.config.spike.value_or(SpikeSettings{});
    s.k = *flags.k;
    if (!flags.scheme.empty()) s.scheme = ParseScheme(flags.scheme);
    if (!flags.granularity.empty()) s.granularity = ParseGranularity(flags.granularity);
    s.bits = flags.bits;
    projector.emplace(s, true, flags.window);
  } else if (!flags.scheme.empty() || !flags.granularity.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--scheme/--granularity need --spike");
  }
  const MatVecFn matvec = projector ? projector->fn() : MatVecFn{};
  const GenerateResult g = Generate(model, prompt, steps, matvec);
  RequireFiniteLogits(g.last_logits);
  doc["tokens"] = g.tokens;
  doc["logits"] = g.last_logits;
  if (projector) {
    const FiringStats stats = projector->stats();
    const SpikeSettings& s = projector->settings();
    doc["spike"] = {{"k", s.k},
                    {"scheme", SchemeName(s.scheme)},
                    {"granularity", GranularityName(s.granularity)},
                    {"bits", s.bits},
                    {"projections", projector->projections()}};
    doc["firing_stats"] = ToJson(stats);
    doc["energy"] = ToJson(ComputeEnergyReport(stats));
  }
  EmitJson(doc, out, force);
  return kExitOk;
}

int CmdBench(const std::string& ckpt, const std::string& lengths_csv, std::size_t repeats,
             double peak_gflops, std::uint64_t seed, const std::string& out, bool force) {
  const std::vector<std::size_t> lengths = ParseLengths(lengths_csv);
  if (lengths.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two lengths to fit an exponent");
  }
  if (repeats < 1) throw Error(ErrorCode::kInvalidArgument, "--repeats must be >= 1");
  if (!out.empty()) CheckWritable(out, force);
  const Model model = LoadCheckpoint(ckpt);
  const BenchmarkResult r = BenchmarkPrefill(model, lengths, repeats, seed);
  const double params = static_cast<double>(model.ActiveParameterCount());
  const ThroughputReport tp = TgsMfuReport(static_cast<double>(r.lengths.back()),
                                           r.mean_seconds.back(), 1, params,
                                           peak_gflops * 1e9);
  json doc = ToJson(r);
  doc["throughput"] = ToJson(tp);
  doc["active_parameters"] = model.ActiveParameterCount();
  doc["peak_gflops"] = peak_gflops;
  EmitJson(doc, out, force);
  return kExitOk;
}

int CmdSpikes(const std::string& tensor_path, float k, const SpikeFlags& flags,
              const std::string& out, const std::string& stats_out, bool force) {
  CheckWritable(out, force);
  if (!stats_out.empty()) CheckWritable(stats_out, force);
  const Tensor x = ReadTensorFile(tensor_path);
  x.RequireFinite("input tensor");
  const SpikeScheme scheme = ParseScheme(flags.scheme.empty() ? "ternary" : flags.scheme);
  const Granularity gran =
      ParseGranularity(flags.granularity.empty() ? "per_token" : flags.granularity);
  const SpikeCountTensor counts = SpikeEncode(x, k, gran);
  SpikeTrain train;
  try {
    train = Expand(counts, scheme,
                   IsBitwise(scheme) ? std::optional<int>(flags.bits) : std::nullopt);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDomain) throw;
    throw Error(ErrorCode::kDomain, std::string("scheme violation: ") + e.what());
  }
  const std::vector<RasterRow> rows =
      train.channels == 0 ? std::vector<RasterRow>{}
                          : RasterExport(train, 0, train.channels);
  {
    std::ofstream f(out);
    if (!f) throw Error(ErrorCode::kIo, "cannot write '" + out + "'");
    WriteRasterCsv(f, rows);
    if (!f) throw Error(ErrorCode::kIo, "write failed for '" + out + "'");
  }
  const FiringStats stats = ComputeFiringStats(counts, &train, flags.window);
  json doc = {{"scheme", SchemeName(scheme)},
              {"granularity", GranularityName(gran)},
              {"k", k},
              {"timesteps", train.timesteps},
              {"raster_rows", rows.size()},
              {"firing_stats", ToJson(stats)},
              {"energy", ToJson(ComputeEnergyReport(stats))}};
  EmitJson(doc, stats_out, force);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spikelite: hybrid linear-attention and spike-coding toolkit"};
  app.require_subcommand(1);

  bool force = false;
  std::string config, out, plan, stats_out, lengths;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> convert_seed;
  std::string src, ckpt, prompt, tensor;
  std::size_t steps = 16, repeats = 3;
  double peak_gflops = 100.0;
  bool int8 = false;
  SpikeFlags spike;
  float spikes_k = 1.0f;

  auto* build = app.add_subcommand("build", "initialize a model from a config");
  build->add_option("--config", config, "config JSON")->required();
  build->add_option("--seed", seed, "initialization seed")->capture_default_str();
  build->add_option("--out", out, "checkpoint path")->required();
  build->add_flag("--int8", int8, "store projection weights as INT8");
  build->add_flag("--force", force, "overwrite existing output");

  auto* convert = app.add_subcommand("convert", "convert a softmax model per a plan");
  convert->add_option("src", src, "source checkpoint")->required();
  convert->add_option("--plan", plan, "conversion plan JSON")->required();
  convert->add_option("--out", out, "converted checkpoint path")->required();
  convert->add_option("--seed", convert_seed, "override the plan seed");
  convert->add_flag("--int8", int8, "store projection weights as INT8");
  convert->add_flag("--force", force, "overwrite existing output");

  auto* run = app.add_subcommand("run", "greedy generation from a token-id prompt");
  run->add_option("ckpt", ckpt, "checkpoint")->required();
  run->add_option("prompt", prompt, "file of whitespace-separated token ids")->required();
  run->add_option("--steps", steps, "tokens to generate")->capture_default_str();
  run->add_option("--spike", spike.k, "enable the spike path with this k");
  AddSpikeOptions(run, spike);
  run->add_option("--out", out, "output JSON (default stdout)");
  run->add_flag("--force", force, "overwrite existing output");

  auto* bench = app.add_subcommand("bench", "time prefill across lengths");
  bench->add_option("ckpt", ckpt, "checkpoint")->required();
  bench->add_option("--lengths", lengths, "comma-separated ascending lengths")->required();
  bench->add_option("--repeats", repeats, "runs per length")->capture_default_str();
  bench->add_option("--seed", seed, "token stream seed")->capture_default_str();
  bench->add_option("--peak-gflops", peak_gflops, "host peak GFLOP/s for MFU")
      ->capture_default_str();
  bench->add_option("--out", out, "report JSON (default stdout)");
  bench->add_flag("--force", force, "overwrite existing output");

  auto* spikes = app.add_subcommand("spikes", "spike-encode a tensor file");
  spikes->add_option("tensor", tensor, "SBTN tensor file")->required();
  spikes->add_option("--spike", spikes_k, "threshold divisor k")->capture_default_str();
  AddSpikeOptions(spikes, spike);
  spikes->add_option("--out", out, "raster CSV path")->required();
  spikes->add_option("--stats", stats_out, "stats JSON (default stdout)");
  spikes->add_flag("--force", force, "overwrite existing output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*build) return CmdBuild(config, seed, out, force, int8);
    if (*convert) return CmdConvert(src, plan, out, convert_seed, force, int8);
    if (*run) return CmdRun(ckpt, prompt, steps, spike, out, force);
    if (*bench) return CmdBench(ckpt, lengths, repeats, peak_gflops, seed, out, force);
    if (*spikes) return CmdSpikes(tensor, spikes_k, spike, out, stats_out, force);
  } catch (const Error& e) {
    std::cerr << "spikelite: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "spikelite: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
