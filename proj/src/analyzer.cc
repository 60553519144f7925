// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikelite/analyzer.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spikelite {
namespace {

// Ranges reported in FiringStats::frac_within, as [0, hi].
constexpr std::int64_t kWithinBounds[] = {0, 1, 3, 7, 15};

}  // namespace

FiringAccumulator::FiringAccumulator(std::size_t window) : window_(window) {
  if (window == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sparsity window must be >= 1");
  }
}

void FiringAccumulator::AddChannelSpan(std::size_t span, std::size_t events) {
  // A silent channel still occupies one window.
  const std::size_t blocks = std::max<std::size_t>(1, (span + window_ - 1) / window_);
  slots_ += blocks * window_;
  events_ += events;
  ++train_channels_;
}

void FiringAccumulator::AddCounts(std::span<const std::int32_t> counts) {
  for (std::int32_t c : counts) {
    ++histogram_[std::abs(static_cast<std::int64_t>(c))];
    ++channels_;
  }
}

void FiringAccumulator::AddTrain(const SpikeTrain& train) {
  for (std::size_t tok = 0; tok < train.tokens; ++tok) {
    for (std::size_t ch = 0; ch < train.channels; ++ch) {
      std::span<const std::int8_t> ev = train.channel(tok, ch);
      std::size_t span = 0, n = 0;
      for (std::size_t t = 0; t < ev.size(); ++t) {
        if (ev[t] != 0) {
          span = t + 1;
          ++n;
        }
      }
      AddChannelSpan(span, n);
    }
  }
}

void FiringAccumulator::Add(const SpikeCountTensor& counts) {
  AddCounts(counts.counts);
  // Ternary: a channel emits |c| consecutive events.
  for (std::int32_t c : counts.counts) {
    const auto n = static_cast<std::size_t>(std::abs(static_cast<std::int64_t>(c)));
    AddChannelSpan(n, n);
  }
}

void FiringAccumulator::Add(const SpikeCountTensor& counts,
                            const SpikeTrain& train) {
  if (train.tokens * train.channels != counts.counts.size()) {
    throw Error(ErrorCode::kDimension, "spike train does not match counts");
  }
  AddCounts(counts.counts);
  AddTrain(train);
}

FiringStats FiringAccumulator::Finish() const {
  FiringStats s;
  s.window = window_;
  s.histogram = histogram_;
  s.channels = channels_;
  s.events = events_;
  s.padded_slots = slots_;
  if (channels_ == 0) {
    s.silent_fraction = 1.0;
    s.windowed_sparsity = 1.0;
    for (std::int64_t hi : kWithinBounds)
      s.frac_within["[0," + std::to_string(hi) + "]"] = 1.0;
    return s;
  }
  const double n = static_cast<double>(channels_);
  auto zero = histogram_.find(0);
  s.silent_fraction = zero == histogram_.end() ? 0.0 : zero->second / n;
  for (std::int64_t hi : kWithinBounds) {
    std::int64_t within = 0;
    for (const auto& [count, freq] : histogram_)
      if (count <= hi) within += freq;
    s.frac_within["[0," + std::to_string(hi) + "]"] = within / n;
  }
  std::int64_t above = 0;
  for (const auto& [count, freq] : histogram_)
    if (count > 16) above += freq;
  s.frac_above_16 = above / n;
  s.avg_spikes_per_channel =
      train_channels_ == 0 ? 0.0
                           : static_cast<double>(events_) / train_channels_;
  s.windowed_sparsity =
      slots_ == 0 ? 1.0
                  : 1.0 - static_cast<double>(events_) / static_cast<double>(slots_);
  return s;
}

FiringStats ComputeFiringStats(const SpikeCountTensor& counts,
                               const SpikeTrain* train, std::size_t window) {
  FiringAccumulator acc(window);
  if (train) {
    acc.Add(counts, *train);
  } else {
    acc.Add(counts);
  }
  return acc.Finish();
}

EnergyReport ComputeEnergyReport(double avg_spikes,
                                 const EnergyConstants& consts) {
  if (!(avg_spikes >= 0.0) || !std::isfinite(avg_spikes)) {
    throw Error(ErrorCode::kInvalidArgument,
                "average spikes must be finite and non-negative");
  }
  if (!(consts.fp16_mac_pj > 0 && consts.int8_mac_pj > 0 &&
        consts.int8_add_pj > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "energy constants must be positive");
  }
  EnergyReport r;
  r.avg_spikes = avg_spikes;
  r.mac_energy_pj = avg_spikes * consts.int8_add_pj;
  if (r.mac_energy_pj == 0.0) {
    r.ratios_infinite = true;
    r.vs_fp16_ratio = std::numeric_limits<double>::infinity();
    r.vs_int8_ratio = std::numeric_limits<double>::infinity();
  } else {
    r.vs_fp16_ratio = consts.fp16_mac_pj / r.mac_energy_pj;
    r.vs_int8_ratio = consts.int8_mac_pj / r.mac_energy_pj;
  }
  return r;
}

EnergyReport ComputeEnergyReport(const FiringStats& stats,
                                 const EnergyConstants& consts) {
  return ComputeEnergyReport(stats.avg_spikes_per_channel, consts);
}

std::vector<RasterRow> RasterExport(const SpikeTrain& train, std::size_t first,
                                    std::size_t last, bool presence_only) {
  if (first >= last || last > train.channels) {
    throw Error(ErrorCode::kInvalidArgument,
                "raster channel range [" + std::to_string(first) + ", " +
                    std::to_string(last) + ") is empty or exceeds " +
                    std::to_string(train.channels) + " channels");
  }
  std::vector<RasterRow> rows;
  for (std::size_t tok = 0; tok < train.tokens; ++tok)
    for (std::size_t t = 0; t < train.timesteps; ++t)
      for (std::size_t ch = first; ch < last; ++ch) {
        const int e = train.channel(tok, ch)[t];
        if (e == 0) continue;
        rows.push_back({tok * train.timesteps + t, ch, presence_only ? 1 : e});
      }
  return rows;
}

SpikeTrain TrainFromRaster(std::span<const RasterRow> rows,
                           const SpikeTrain& layout) {
  SpikeTrain train = layout;
  std::fill(train.events.begin(), train.events.end(), 0);
  train.events.resize(train.tokens * train.channels * train.timesteps, 0);
  for (const RasterRow& r : rows) {
    if (train.timesteps == 0 || r.neuron >= train.channels ||
        r.time >= train.tokens * train.timesteps) {
      throw Error(ErrorCode::kFormat, "raster row outside the train layout");
    }
    const std::size_t tok = r.time / train.timesteps;
    const std::size_t t = r.time % train.timesteps;
    train.events[(tok * train.channels + r.neuron) * train.timesteps + t] =
        static_cast<std::int8_t>(r.value);
  }
  return train;
}

void WriteRasterCsv(std::ostream& os, std::span<const RasterRow> rows) {
  os << "time,neuron,value\n";
  for (const RasterRow& r : rows)
    os << r.time << ',' << r.neuron << ',' << r.value << '\n';
}

nlohmann::json ToJson(const FiringStats& stats) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [count, freq] : stats.histogram)
    hist[std::to_string(count)] = freq;
  return {
      {"channels", stats.channels},
      {"histogram", hist},
      {"avg_spikes", stats.avg_spikes_per_channel},
      {"silent_fraction", stats.silent_fraction},
      {"frac_within", stats.frac_within},
      {"frac_above_16", stats.frac_above_16},
      {"windowed_sparsity", stats.windowed_sparsity},
      {"window", stats.window},
      {"events", stats.events},
      {"padded_slots", stats.padded_slots},
  };
}

nlohmann::json ToJson(const EnergyReport& report) {
  // JSON has no infinity; silent networks report null ratios plus the flag.
  auto ratio = [&](double v) -> nlohmann::json {
    return report.ratios_infinite ? nlohmann::json(nullptr) : nlohmann::json(v);
  };
  return {
      {"avg_spikes", report.avg_spikes},
      {"mac_energy_pj", report.mac_energy_pj},
      {"vs_fp16_ratio", ratio(report.vs_fp16_ratio)},
      {"vs_int8_ratio", ratio(report.vs_int8_ratio)},
      {"ratios_infinite", report.ratios_infinite},
  };
}

}  // namespace spikelite
