#pragma once

// Load-series ingestion, alignment, normalization, sliding-window
// extraction with midpoint targets, owner partitioning, and a synthetic
// generator for desk-scale runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fednilm/errors.hpp"

namespace fednilm {

enum class SeriesKind { total, appliance };

struct LoadSeries {
  std::string meter_id;
  SeriesKind kind = SeriesKind::total;
  std::string appliance_name;  // set when kind == appliance
  double period_s = 1.0;
  std::int64_t start_epoch_s = 0;
  std::vector<float> values;  // watts
  // Raw per-sample timestamps as read from file. Empty means the series is
  // already uniform on (start_epoch_s, period_s).
  std::vector<std::int64_t> timestamps;
};

struct ApplianceThreshold {
  std::string appliance;
  double watts = 0.0;  // strictly-greater-than comparison
};

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

struct WindowedDataset {
  int window_len = 0;                    // W
  std::size_t count = 0;                 // N
  std::vector<float> inputs;             // N x W, z-scored totals
  std::vector<float> target_power;       // watts, for metrics
  std::vector<float> target_power_norm;  // z-scored, for regression training
  std::vector<std::uint8_t> target_on;   // 0/1 per the strict threshold
  NormalizationStats stats;              // total-load stats used on inputs
  NormalizationStats target_stats;       // appliance stats used on targets
};

struct CsvSchema {
  std::string timestamp_col;                       // integer epoch seconds
  std::string aggregate_col;                       // total load
  std::map<std::string, std::string> appliances;   // column -> appliance name
  double period_s = 8.0;                           // nominal sampling period
};

// One LoadSeries per selected column; timestamps must be strictly
// increasing, power readings non-negative. Errors cite the 1-based line.
std::vector<LoadSeries> ingest_csv(const std::string& path, const CsvSchema& schema);

struct AlignedPair {
  LoadSeries total;
  LoadSeries appliance;
  std::size_t dropped_samples = 0;  // grid points lost to the truncating gap
  bool truncated = false;
};

// Resamples both series onto one uniform grid (forward-fill within
// max_gap_s); the pair is cut at the first longer gap and the truncation
// reported in the result.
AlignedPair align_and_resample(const LoadSeries& total, const LoadSeries& appliance,
                               double period_s, double max_gap_s);

// Mean and population standard deviation; rejects constant input.
NormalizationStats normalize_fit(const std::vector<float>& values);

// N = T - W + 1 windows; window s covers [s, s+W-1] and its target is the
// appliance value at s + W/2. target_on uses strict greater-than.
WindowedDataset make_windows(const LoadSeries& total, const LoadSeries& appliance,
                             int window_len, const ApplianceThreshold& threshold,
                             const NormalizationStats& input_stats,
                             const NormalizationStats& target_stats);

struct PartitionResult {
  std::vector<WindowedDataset> owners;
  std::size_t leftover_windows = 0;
};

// K contiguous, disjoint, in-order blocks of exactly samples_per_owner
// windows each; trailing leftovers are reported, not used.
PartitionResult partition_owners(const WindowedDataset& ds, int owner_count,
                                 std::size_t samples_per_owner);

// Takes the first `count` windows (used to carve a shared test span).
WindowedDataset slice_windows(const WindowedDataset& ds, std::size_t first,
                              std::size_t count);

struct SynthAppliance {
  std::string name;
  double on_power = 0.0;    // watts while on
  double duty_cycle = 0.5;  // fraction of cycle_len spent on
  int cycle_len = 100;      // samples per cycle
};

struct SynthConfig {
  std::size_t n_samples = 0;
  double period_s = 8.0;
  std::vector<SynthAppliance> appliances;
  double noise_std = 0.0;  // |N(0, std)| base load added to the total
  std::uint64_t seed = 0;
};

struct SynthResult {
  LoadSeries total;
  std::vector<LoadSeries> appliances;
};

// Rectangular-wave appliances with seeded random phase; total is their sum
// plus the absolute-Gaussian base load. Deterministic given the seed.
SynthResult synth_generate(const SynthConfig& cfg);

// Cache file round trip ("FNLMDS01" framing, little-endian).
void save_dataset(const WindowedDataset& ds, const std::string& path);
WindowedDataset load_dataset(const std::string& path);

// FNV-1a digest of the dataset's cache-file encoding.
std::uint64_t dataset_digest(const WindowedDataset& ds);

}  // namespace fednilm
