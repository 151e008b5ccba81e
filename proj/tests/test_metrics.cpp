#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fednilm/metrics.hpp"

using namespace fednilm;

TEST_CASE("mae basics") {
  const std::vector<double> truth = {1.0, 2.0};
  const std::vector<double> pred = {3.0, 2.0};
  CHECK(mae(pred, truth) == doctest::Approx(1.0));
  CHECK(mae(truth, truth) == 0.0);

  const std::vector<double> longer = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(mae(std::span<const double>(pred), std::span<const double>(longer)),
                  DataError);
  const std::vector<double> empty;
  CHECK_THROWS_AS(mae(std::span<const double>(empty), std::span<const double>(empty)),
                  DataError);
}

TEST_CASE("mae properties against a naive loop") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> dist(-500.0, 500.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = dist(rng);
    for (auto& v : b) v = dist(rng);

    double naive = 0.0;
    for (std::size_t i = 0; i < n; ++i) naive += std::fabs(a[i] - b[i]);
    naive /= static_cast<double>(n);

    CHECK(mae(a, b) == doctest::Approx(naive).epsilon(1e-12));
    CHECK(mae(a, b) == mae(b, a));  // symmetry

    const double c = dist(rng);
    std::vector<double> a_shift = a, b_shift = b;
    for (auto& v : a_shift) v += c;
    for (auto& v : b_shift) v += c;
    CHECK(mae(a_shift, b_shift) == doctest::Approx(mae(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("confusion counts") {
  const std::vector<std::uint8_t> pred = {1, 0, 1, 0};
  const std::vector<std::uint8_t> truth = {1, 1, 0, 0};
  const auto c = confusion(pred, truth);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);

  const std::vector<std::uint8_t> all_on(16, 1);
  const auto perfect = confusion(all_on, all_on);
  CHECK(perfect.tp == 16);
  CHECK(perfect.tn + perfect.fp + perfect.fn == 0);

  const std::vector<std::uint8_t> shorter = {1};
  CHECK_THROWS_AS(confusion(pred, shorter), DataError);
}

TEST_CASE("confusion partitions every input") {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng() % 128;
    std::vector<std::uint8_t> p(n), t(n);
    for (auto& v : p) v = rng() % 2;
    for (auto& v : t) v = rng() % 2;
    const auto c = confusion(p, t);
    CHECK(c.total() == n);

    // against a naive counter
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] && t[i]) ++tp;
      if (!p[i] && !t[i]) ++tn;
      if (p[i] && !t[i]) ++fp;
      if (!p[i] && t[i]) ++fn;
    }
    CHECK(c.tp == tp);
    CHECK(c.tn == tn);
    CHECK(c.fp == fp);
    CHECK(c.fn == fn);
  }
}

TEST_CASE("f1 values and degenerate flag") {
  CHECK(f1({10, 5, 0, 0}) == 1.0);
  CHECK(f1({1, 0, 1, 1}) == doctest::Approx(0.5));

  bool degenerate = false;
  CHECK(f1({0, 7, 0, 0}, &degenerate) == 0.0);
  CHECK(degenerate);

  degenerate = false;
  CHECK(f1({0, 0, 3, 0}, &degenerate) == 0.0);  // fp > 0: defined, just zero
  CHECK_FALSE(degenerate);

  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionCounts c{rng() % 50, rng() % 50, rng() % 50, rng() % 50};
    const double v = f1(c);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (c.tp > 0 && c.fp == 0 && c.fn == 0) CHECK(v == 1.0);
    if (v == 1.0) {
      CHECK(c.fp == 0);
      CHECK(c.fn == 0);
      CHECK(c.tp > 0);
    }
  }
}

TEST_CASE("improvement indicators reproduce the tabulated values") {
  // dishwasher, 4 owners
  const auto imp = improvement(56.880, 15.851, 0.148, 0.510);
  CHECK(imp.imp_mae_pct == doctest::Approx(72.133).epsilon(1e-4));
  CHECK(std::fabs(imp.imp_mae_pct - 72.133) < 0.001);
  CHECK(std::fabs(imp.imp_f_pct - 244.595) < 0.001);

  // pelletizer
  const auto pellet = improvement(327.417, 85.200, 0.251, 0.755);
  CHECK(std::fabs(pellet.imp_mae_pct - 73.978) < 0.001);

  // no change -> 0%
  const auto flat = improvement(10.0, 10.0, 0.5, 0.5);
  CHECK(flat.imp_mae_pct == 0.0);
  CHECK(flat.imp_f_pct == 0.0);

  CHECK_THROWS_AS(improvement(0.0, 1.0, 0.5, 0.5), DataError);
  CHECK_THROWS_AS(improvement(1.0, 1.0, 0.0, 0.5), DataError);
}

TEST_CASE("gap indicators reproduce the tabulated values") {
  const auto g = gap(15.438, 15.851, 0.512, 0.510);
  CHECK(std::fabs(g.gap_mae_pct - (-2.675)) < 0.001);
  CHECK(std::fabs(g.gap_f_pct - (-0.391)) < 0.001);

  const auto flat = gap(10.0, 10.0, 0.5, 0.5);
  CHECK(flat.gap_mae_pct == 0.0);
  CHECK(flat.gap_f_pct == 0.0);

  CHECK_THROWS_AS(gap(0.0, 1.0, 0.5, 0.5), DataError);
  CHECK_THROWS_AS(gap(1.0, 1.0, 0.0, 0.5), DataError);
}

TEST_CASE("comparison report is reproducible from its echoed inputs") {
  const auto r = compare_models(56.880, 0.148, 15.438, 0.512, 15.851, 0.510);
  const double imp_mae = 100.0 * (r.avg_mae_loc - r.mae_fed) / r.avg_mae_loc;
  const double imp_f = 100.0 * (r.f_fed - r.avg_f_loc) / r.avg_f_loc;
  const double gap_mae = 100.0 * (r.mae_cent - r.mae_fed) / r.mae_cent;
  const double gap_f = 100.0 * (r.f_fed - r.f_cent) / r.f_cent;
  CHECK(std::fabs(r.imp_mae_pct - imp_mae) <= 1e-9 * std::fabs(imp_mae));
  CHECK(std::fabs(r.imp_f_pct - imp_f) <= 1e-9 * std::fabs(imp_f));
  CHECK(std::fabs(r.gap_mae_pct - gap_mae) <= 1e-9 * std::fabs(gap_mae));
  CHECK(std::fabs(r.gap_f_pct - gap_f) <= 1e-9 * std::fabs(gap_f));
}

namespace {

// identity network: window 1, dense(1,1) with w=1,b=0; prediction equals the
// (normalized) input, so crafted datasets give exact predicted watts
struct IdentityModel {
  ArchitectureSpec spec;
  ParameterVector params;

  explicit IdentityModel(HeadMode mode) {
    spec.window_len = 1;
    spec.head_mode = mode;
    spec.layers = {DenseLayer{1, 1, Activation::linear}};
    validate(spec);
    params.spec_hash = spec_hash(spec);
    params.values = {1.0f, 0.0f};
  }
};

}  // namespace

TEST_CASE("evaluate_model in regression mode") {
  IdentityModel m(HeadMode::regression);

  WindowedDataset test;
  test.window_len = 1;
  test.count = 4;
  test.stats = {0.0, 1.0};
  test.target_stats = {0.0, 1.0};  // de-normalization is the identity
  test.inputs = {100.0f, 0.0f, 50.0f, 200.0f};       // predicted watts
  test.target_power = {100.0f, 0.0f, 50.0f, 200.0f}; // truth equals prediction
  test.target_power_norm = test.target_power;
  test.target_on = {1, 0, 0, 1};  // threshold 60

  const auto report = evaluate_model(m.spec, m.params, test, 60.0, HeadMode::regression);
  CHECK(report.mae == 0.0);
  CHECK(report.f1 == 1.0);
  CHECK(report.counts.total() == 4);
  CHECK(report.n_points == 4);

  // negative predictions clamp to zero before the MAE
  WindowedDataset neg = test;
  neg.inputs = {-50.0f, -10.0f, -1.0f, -100.0f};
  neg.target_power = {0.0f, 0.0f, 0.0f, 0.0f};
  neg.target_on = {0, 0, 0, 0};
  const auto clamped = evaluate_model(m.spec, m.params, neg, 60.0, HeadMode::regression);
  CHECK(clamped.mae == 0.0);

  CHECK_THROWS_AS(evaluate_model(m.spec, m.params, test, 60.0, HeadMode::classification),
                  ConfigError);
  WindowedDataset empty = test;
  empty.count = 0;
  CHECK_THROWS_AS(evaluate_model(m.spec, m.params, empty, 60.0, HeadMode::regression),
                  DataError);
}

TEST_CASE("evaluate_model constant-zero predictor on a duty-cycle signal") {
  // zero weights -> predicted watts = target_stats.mean = 0 -> recall 0,
  // MAE = duty * on_power
  IdentityModel m(HeadMode::regression);
  m.params.values = {0.0f, 0.0f};

  const double on_power = 200.0;
  WindowedDataset test;
  test.window_len = 1;
  test.count = 1000;
  test.stats = {0.0, 1.0};
  test.target_stats = {0.0, 1.0};
  test.inputs.assign(1000, 0.0f);
  test.target_power.resize(1000);
  test.target_power_norm.resize(1000);
  test.target_on.resize(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    const bool on = (i % 100) < 25;  // duty cycle 0.25
    test.target_power[i] = on ? static_cast<float>(on_power) : 0.0f;
    test.target_power_norm[i] = test.target_power[i];
    test.target_on[i] = on ? 1 : 0;
  }

  const auto report = evaluate_model(m.spec, m.params, test, 100.0, HeadMode::regression);
  CHECK(report.mae == doctest::Approx(0.25 * on_power).epsilon(1e-9));
  CHECK(report.recall == 0.0);
  CHECK(report.counts.total() == 1000);
}

TEST_CASE("evaluate_model in classification mode") {
  IdentityModel m(HeadMode::classification);
  // logit = normalized input; probability > 0.5 iff input > 0

  WindowedDataset test;
  test.window_len = 1;
  test.count = 4;
  test.stats = {0.0, 1.0};
  test.target_stats = {0.0, 1.0};
  test.inputs = {5.0f, -5.0f, 3.0f, -2.0f};
  test.target_power = {1.0f, 0.0f, 0.0f, 1.0f};
  test.target_power_norm = test.target_power;
  test.target_on = {1, 0, 0, 1};

  const auto report =
      evaluate_model(m.spec, m.params, test, 0.5, HeadMode::classification);
  CHECK(report.counts.tp == 1);
  CHECK(report.counts.tn == 1);
  CHECK(report.counts.fp == 1);
  CHECK(report.counts.fn == 1);
  CHECK(report.f1 == doctest::Approx(0.5));
  CHECK(report.mae == doctest::Approx(0.5));  // status-space MAE = error rate
}
