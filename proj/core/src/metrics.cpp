#include "fednilm/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fednilm {

namespace {

template <typename T>
double mae_impl(std::span<const T> pred, std::span<const T> truth) {
  if (pred.size() != truth.size()) {
    throw DataError("mae: length mismatch");
  }
  if (pred.empty()) {
    throw DataError("mae: empty input");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::fabs(static_cast<double>(pred[i]) - static_cast<double>(truth[i]));
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth) {
  return mae_impl(pred, truth);
}

double mae(std::span<const float> pred, std::span<const float> truth) {
  return mae_impl(pred, truth);
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred_on,
                          std::span<const std::uint8_t> true_on) {
  if (pred_on.size() != true_on.size()) {
    throw DataError("confusion: length mismatch");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred_on.size(); ++i) {
    const bool p = pred_on[i] != 0;
    const bool t = true_on[i] != 0;
    if (p && t) ++c.tp;
    else if (!p && !t) ++c.tn;
    else if (p && !t) ++c.fp;
    else ++c.fn;
  }
  return c;
}

double f1(const ConfusionCounts& counts, bool* degenerate) {
  const std::uint64_t denom = 2 * counts.tp + counts.fn + counts.fp;
  if (degenerate != nullptr) *degenerate = (denom == 0);
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(counts.tp) / static_cast<double>(denom);
}

ImprovementResult improvement(double avg_mae_loc, double mae_fed,
                              double avg_f_loc, double f_fed) {
  if (!(avg_mae_loc > 0.0)) {
    throw DataError("improvement: Avg(MAE_loc) must be positive");
  }
  if (!(avg_f_loc > 0.0)) {
    throw DataError("improvement: Avg(F1_loc) must be positive");
  }
  ImprovementResult r;
  r.imp_mae_pct = 100.0 * (avg_mae_loc - mae_fed) / avg_mae_loc;
  r.imp_f_pct = 100.0 * (f_fed - avg_f_loc) / avg_f_loc;
  return r;
}

GapResult gap(double mae_cent, double mae_fed, double f_cent, double f_fed) {
  if (!(mae_cent > 0.0)) {
    throw DataError("gap: MAE_cent must be positive");
  }
  if (!(f_cent > 0.0)) {
    throw DataError("gap: F1_cent must be positive");
  }
  GapResult r;
  r.gap_mae_pct = 100.0 * (mae_cent - mae_fed) / mae_cent;
  r.gap_f_pct = 100.0 * (f_fed - f_cent) / f_cent;
  return r;
}

ComparisonReport compare_models(double avg_mae_loc, double avg_f_loc,
                                double mae_cent, double f_cent,
                                double mae_fed, double f_fed) {
  const auto imp = improvement(avg_mae_loc, mae_fed, avg_f_loc, f_fed);
  const auto g = gap(mae_cent, mae_fed, f_cent, f_fed);
  ComparisonReport r;
  r.imp_mae_pct = imp.imp_mae_pct;
  r.imp_f_pct = imp.imp_f_pct;
  r.gap_mae_pct = g.gap_mae_pct;
  r.gap_f_pct = g.gap_f_pct;
  r.avg_mae_loc = avg_mae_loc;
  r.mae_fed = mae_fed;
  r.mae_cent = mae_cent;
  r.avg_f_loc = avg_f_loc;
  r.f_fed = f_fed;
  r.f_cent = f_cent;
  return r;
}

MetricReport evaluate_model(const ArchitectureSpec& spec,
                            const ParameterVector& params,
                            const WindowedDataset& test_set,
                            double threshold_watts, HeadMode mode) {
  if (mode != spec.head_mode) {
    throw ConfigError("evaluate_model: mode does not match the architecture head");
  }
  if (test_set.count == 0) {
    throw DataError("evaluate_model: empty test set");
  }
  if (test_set.window_len != spec.window_len) {
    throw DataError("evaluate_model: dataset window length does not match the spec");
  }

  MetricReport report;
  report.n_points = test_set.count;

  constexpr std::size_t kChunk = 2048;
  const std::size_t w = static_cast<std::size_t>(test_set.window_len);
  double abs_err = 0.0;
  std::vector<std::uint8_t> pred_on(test_set.count);

  for (std::size_t base = 0; base < test_set.count; base += kChunk) {
    const std::size_t rows = std::min(kChunk, test_set.count - base);
    const auto preds = forward<float>(
        spec, params,
        std::span<const float>(test_set.inputs).subspan(base * w, rows * w), rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t gi = base + i;
      if (mode == HeadMode::regression) {
        double watts = static_cast<double>(preds[i]) * test_set.target_stats.std +
                       test_set.target_stats.mean;
        if (watts < 0.0) watts = 0.0;
        abs_err += std::fabs(watts - static_cast<double>(test_set.target_power[gi]));
        pred_on[gi] = watts > threshold_watts ? 1 : 0;
      } else {
        pred_on[gi] = preds[i] > 0.5f ? 1 : 0;
        abs_err += std::fabs(static_cast<double>(pred_on[gi]) -
                             static_cast<double>(test_set.target_on[gi]));
      }
    }
  }

  report.mae = abs_err / static_cast<double>(test_set.count);
  report.counts = confusion(pred_on, test_set.target_on);
  report.f1 = f1(report.counts, &report.f1_degenerate);
  const auto& c = report.counts;
  report.precision =
      (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  report.recall =
      (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  return report;
}

}  // namespace fednilm
