// Copyright 2026 The spikelite Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SPIKELITE_ANALYZER_H_
#define SPIKELITE_ANALYZER_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikelite/spike_codec.h"

namespace spikelite {

inline constexpr std::size_t kDefaultSparsityWindow = 3;

struct FiringStats {
  std::map<std::int64_t, std::int64_t> histogram;  // |count| -> channels
  std::size_t channels = 0;
  double avg_spikes_per_channel = 0.0;
  double silent_fraction = 0.0;
  std::map<std::string, double> frac_within;  // "[0,7]" -> share of channels
  double frac_above_16 = 0.0;
  double windowed_sparsity = 0.0;
  std::size_t window = kDefaultSparsityWindow;
  std::uint64_t events = 0;
  std::uint64_t padded_slots = 0;
};

// Running tally over many count tensors (e.g. every projection input of a
// forward pass). Event figures come from the scheme expansion; without a
// scheme, ternary expansion is assumed.
class FiringAccumulator {
 public:
  explicit FiringAccumulator(std::size_t window = kDefaultSparsityWindow);

  void Add(const SpikeCountTensor& counts);
  void Add(const SpikeCountTensor& counts, const SpikeTrain& train);
  void AddCounts(std::span<const std::int32_t> counts);
  void AddTrain(const SpikeTrain& train);

  FiringStats Finish() const;
  bool empty() const { return channels_ == 0; }

 private:
  void AddChannelSpan(std::size_t span, std::size_t events);

  std::size_t window_;
  std::map<std::int64_t, std::int64_t> histogram_;
  std::size_t channels_ = 0;
  std::size_t train_channels_ = 0;
  std::uint64_t events_ = 0;
  std::uint64_t slots_ = 0;
};

FiringStats ComputeFiringStats(const SpikeCountTensor& counts,
                               const SpikeTrain* train = nullptr,
                               std::size_t window = kDefaultSparsityWindow);

struct EnergyConstants {
  double fp16_mac_pj = 1.5;
  double int8_mac_pj = 0.23;
  double int8_add_pj = 0.03;
};

struct EnergyReport {
  double avg_spikes = 0.0;
  double mac_energy_pj = 0.0;
  double vs_fp16_ratio = 0.0;
  double vs_int8_ratio = 0.0;
  bool ratios_infinite = false;  // silent network
};

// E = avg_spikes * E_int8_add, compared against one FP16 / INT8 MAC.
EnergyReport ComputeEnergyReport(double avg_spikes,
                                 const EnergyConstants& consts = {});
EnergyReport ComputeEnergyReport(const FiringStats& stats,
                                 const EnergyConstants& consts = {});

struct RasterRow {
  std::size_t time = 0;    // token * timesteps + step
  std::size_t neuron = 0;  // channel index
  int value = 0;           // +-1 (or 1 for presence-only)

  friend bool operator==(const RasterRow&, const RasterRow&) = default;
};

// Events of channels [first, last) sorted by time then neuron.
std::vector<RasterRow> RasterExport(const SpikeTrain& train, std::size_t first,
                                    std::size_t last,
                                    bool presence_only = false);

// Rebuilds a train from signed raster rows of a train with the given layout.
SpikeTrain TrainFromRaster(std::span<const RasterRow> rows,
                           const SpikeTrain& layout);

void WriteRasterCsv(std::ostream& os, std::span<const RasterRow> rows);

nlohmann::json ToJson(const FiringStats& stats);
nlohmann::json ToJson(const EnergyReport& report);

}  // namespace spikelite

#endif  // SPIKELITE_ANALYZER_H_
