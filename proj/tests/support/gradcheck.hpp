#pragma once

// Shared by the unit tests and the acceptance suite: random small network
// specs and an independent central finite-difference gradient oracle.

#include <cmath>
#include <random>
#include <vector>

#include "fednilm/model.hpp"

namespace fednilm::testsupport {

// Random compact architecture with at most ~500 parameters.
inline ArchitectureSpec random_small_spec(std::mt19937_64& rng) {
  const int windows[] = {9, 11, 15, 21};
  ArchitectureSpec spec;
  spec.window_len = windows[rng() % 4];
  spec.head_mode = (rng() % 2) ? HeadMode::classification : HeadMode::regression;

  const Activation hidden_acts[] = {Activation::relu, Activation::sigmoid};
  int channels = 1;
  int length = spec.window_len;
  const int n_convs = static_cast<int>(rng() % 3);  // 0..2
  for (int c = 0; c < n_convs; ++c) {
    const int kernel = 2 + static_cast<int>(rng() % 3);  // 2..4
    const int stride = 1 + static_cast<int>(rng() % 2);  // 1..2
    if ((length - kernel) / stride + 1 < 3) break;
    const int out_channels = 2 + static_cast<int>(rng() % 2);  // 2..3
    spec.layers.emplace_back(Conv1dLayer{channels, out_channels, kernel, stride,
                                         hidden_acts[rng() % 2]});
    length = (length - kernel) / stride + 1;
    channels = out_channels;
  }
  const int flat = channels * length;
  const int hidden = 3 + static_cast<int>(rng() % 4);  // 3..6
  spec.layers.emplace_back(DenseLayer{flat, hidden, hidden_acts[rng() % 2]});
  spec.layers.emplace_back(DenseLayer{hidden, 1, Activation::linear});
  validate(spec);
  return spec;
}

inline BasicBatch<double> random_batch(const ArchitectureSpec& spec,
                                       std::mt19937_64& rng, std::size_t rows) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  BasicBatch<double> batch;
  batch.rows = rows;
  batch.width = spec.window_len;
  batch.inputs.resize(rows * static_cast<std::size_t>(spec.window_len));
  for (auto& v : batch.inputs) v = gauss(rng);
  batch.targets.resize(rows);
  for (auto& t : batch.targets) {
    t = spec.head_mode == HeadMode::classification
            ? static_cast<double>(rng() % 2)
            : gauss(rng);
  }
  return batch;
}

inline std::span<const double> probe_inputs(const BasicBatch<double>& batch) {
  return std::span<const double>(batch.inputs);
}

// Central finite differences of the mean batch loss, step h.
inline std::vector<double> finite_difference_gradient(
    const ArchitectureSpec& spec, const BasicParameterVector<double>& params,
    const BasicBatch<double>& batch, double h = 1e-5) {
  std::vector<double> grad(params.count());
  BasicParameterVector<double> probe = params;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    auto preds_hi = forward<double>(spec, probe, probe_inputs(batch), batch.rows);
    const double loss_hi = loss<double>(preds_hi, batch.targets, spec.head_mode);
    probe.values[i] = orig - h;
    auto preds_lo = forward<double>(spec, probe, probe_inputs(batch), batch.rows);
    const double loss_lo = loss<double>(preds_lo, batch.targets, spec.head_mode);
    probe.values[i] = orig;
    grad[i] = (loss_hi - loss_lo) / (2.0 * h);
  }
  return grad;
}

// Relative error with a floored denominator so dead-ReLU zero gradients do
// not blow the ratio up on finite-difference noise.
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-3});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace fednilm::testsupport
