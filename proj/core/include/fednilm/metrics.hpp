#pragma once

// Evaluation suite: MAE in watts, confusion counts, F1, and the four
// comparative indicators (improvement over the average local baseline, gap
// versus the centralized baseline), all reported as percentages.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fednilm/data.hpp"
#include "fednilm/model.hpp"

namespace fednilm {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + tn + fp + fn; }
};

struct MetricReport {
  double mae = 0.0;  // watts
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  ConfusionCounts counts;
  std::size_t n_points = 0;
  // Set when no positives exist anywhere (2tp+fn+fp == 0); f1 is then 0 by
  // convention rather than an error.
  bool f1_degenerate = false;
};

struct ComparisonReport {
  double imp_mae_pct = 0.0;
  double imp_f_pct = 0.0;
  double gap_mae_pct = 0.0;
  double gap_f_pct = 0.0;
  // Inputs echoed so every output is recomputable from the report alone.
  double avg_mae_loc = 0.0;
  double mae_fed = 0.0;
  double mae_cent = 0.0;
  double avg_f_loc = 0.0;
  double f_fed = 0.0;
  double f_cent = 0.0;
};

double mae(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const float> pred, std::span<const float> truth);

ConfusionCounts confusion(std::span<const std::uint8_t> pred_on,
                          std::span<const std::uint8_t> true_on);

// F1 = 2tp / (2tp + fn + fp); 0 with the degenerate flag when the
// denominator vanishes.
double f1(const ConfusionCounts& counts, bool* degenerate = nullptr);

struct ImprovementResult {
  double imp_mae_pct = 0.0;
  double imp_f_pct = 0.0;
};

// Positive imp_mae: the federated MAE is lower than the local average.
// Positive imp_f: the federated F1 is higher than the local average.
ImprovementResult improvement(double avg_mae_loc, double mae_fed,
                              double avg_f_loc, double f_fed);

struct GapResult {
  double gap_mae_pct = 0.0;
  double gap_f_pct = 0.0;
};

// Negative gap_mae: the federated MAE exceeds the centralized one.
// Negative gap_f: the federated F1 falls below the centralized one.
GapResult gap(double mae_cent, double mae_fed, double f_cent, double f_fed);

ComparisonReport compare_models(double avg_mae_loc, double avg_f_loc,
                                double mae_cent, double f_cent,
                                double mae_fed, double f_fed);

// Runs the model over the test set. Regression: predictions de-normalized
// to watts and clamped at zero, MAE in watts, on/off by thresholding
// predicted watts. Classification: on/off by probability > 0.5, MAE over
// the {0,1} status values.
MetricReport evaluate_model(const ArchitectureSpec& spec,
                            const ParameterVector& params,
                            const WindowedDataset& test_set,
                            double threshold_watts, HeadMode mode);

}  // namespace fednilm
