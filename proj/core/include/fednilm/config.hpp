#pragma once

// Run configuration: JSON file + presets + flag overrides. Unknown keys are
// fatal, never warnings, so a typo cannot silently change an experiment.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fednilm/data.hpp"
#include "fednilm/fedavg.hpp"
#include "fednilm/model.hpp"

namespace fednilm {

enum class DataSource { synthetic, csv, cached };

struct CsvDataConfig {
  std::string path;
  std::string timestamp_col = "Unix";
  std::string aggregate_col = "Aggregate";
  std::string appliance_col;
  double max_gap_s = 30.0;
  double period_s = 8.0;
};

struct RunConfig {
  std::string scenario = "custom";
  HeadMode mode = HeadMode::regression;
  std::uint64_t seed = 1;
  int window_len = 599;
  std::string appliance;
  double threshold_watts = 0.0;
  int clients = 4;       // K
  int rounds = 100;      // R
  int local_epochs = 10; // E
  int batch_size = 512;
  int eval_every = 5;
  std::size_t samples_per_owner = 0;  // 0 = fill from the data split
  std::size_t test_samples = 0;
  std::string output_dir = "runs/out";
  OptimizerKind optimizer = OptimizerKind::adam;
  OptimizerHyper hyper;
  bool reset_optimizer_each_round = false;

  DataSource source = DataSource::synthetic;
  SynthConfig synthetic;
  CsvDataConfig csv;
  std::string cached_dir;

  // Empty = default_architecture(window_len, mode).
  std::vector<Layer> architecture;

  ArchitectureSpec resolve_architecture() const;
  FederationConfig federation() const;
  void validate() const;
};

// Presets: `residential` (Table-style defaults, 8 s sampling),
// `industrial` (16 s sampling, 8 owners) and `synthetic-small`
// (desk-scale: K=4, R=20, E=2, batch 64, ~4000 windows per owner).
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// Power-on threshold table, watts (strict greater-than).
std::optional<double> default_threshold(const std::string& appliance);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& cfg);  // canonical echo

// Output directory resolution: cfg.output_dir unless the documented
// environment override FEDNILM_OUT_DIR is set.
std::string resolve_output_dir(const RunConfig& cfg);

}  // namespace fednilm
