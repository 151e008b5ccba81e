#pragma once

// Dataset preparation shared by the CLI commands and the test harness:
// builds owner datasets plus the shared held-out test span from whichever
// source the run config names (synthetic, csv, or a cache directory).

#include <memory>
#include <string>
#include <vector>

#include "fednilm/config.hpp"
#include "fednilm/data.hpp"

namespace fednilm {

struct PreparedData {
  std::vector<std::shared_ptr<const WindowedDataset>> owners;
  std::shared_ptr<const WindowedDataset> test;
  std::size_t leftover_windows = 0;
  bool truncated = false;          // csv gap truncation happened
  std::size_t dropped_samples = 0; // samples lost to the truncating gap
};

// Normalization statistics always come from the training span only and are
// reused on the test span.
PreparedData prepare_datasets(const RunConfig& cfg);

// Writes owner_<k>.fnlmds and test.fnlmds into dir.
void save_prepared(const PreparedData& data, const std::string& dir);
PreparedData load_prepared(const std::string& dir, int owner_count);

// Union of the owner datasets, in owner order: the centralized baseline's
// training set.
WindowedDataset concat_owners(const PreparedData& data);

}  // namespace fednilm
