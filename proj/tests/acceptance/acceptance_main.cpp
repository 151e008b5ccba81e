// Acceptance suite: one line per criterion, nonzero exit when any fails.
// Everything runs in-process against the library API; the only external
// surface exercised here is the loopback TCP transport.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <future>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "fednilm/checkpoint.hpp"
#include "fednilm/config.hpp"
#include "fednilm/metrics.hpp"
#include "fednilm/netproto.hpp"
#include "fednilm/pipeline.hpp"
#include "support/gradcheck.hpp"

using namespace fednilm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double weighted_mean_loss(const RoundRecord& r) {
  double acc = 0.0;
  std::uint64_t n = 0;
  for (const auto& c : r.per_client) {
    acc += c.mean_train_loss * static_cast<double>(c.n_k);
    n += c.n_k;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

char buf[512];

// --- 1: indicator arithmetic --------------------------------------------

Outcome criterion_indicators() {
  const auto imp = improvement(56.880, 15.851, 0.148, 0.510);
  const auto g = gap(15.438, 15.851, 0.512, 0.510);
  const auto pellet = improvement(327.417, 85.200, 0.251, 0.755);
  const bool pass = std::fabs(imp.imp_mae_pct - 72.133) <= 0.001 &&
                    std::fabs(imp.imp_f_pct - 244.595) <= 0.001 &&
                    std::fabs(g.gap_mae_pct - (-2.675)) <= 0.001 &&
                    std::fabs(g.gap_f_pct - (-0.391)) <= 0.001 &&
                    std::fabs(pellet.imp_mae_pct - 73.978) <= 0.001;
  std::snprintf(buf, sizeof buf,
                "imp_mae=%.3f imp_f=%.3f gap_mae=%.3f gap_f=%.3f pellet=%.3f",
                imp.imp_mae_pct, imp.imp_f_pct, g.gap_mae_pct, g.gap_f_pct,
                pellet.imp_mae_pct);
  return {pass, buf};
}

// --- 2: gradient correctness ----------------------------------------------

Outcome criterion_gradients() {
  std::mt19937_64 rng(20240817);
  double worst = 0.0;
  int nets = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const auto spec = testsupport::random_small_spec(rng);
    if (param_count(spec) > 500) return {false, "generator exceeded 500 params"};
    auto params = init_params<double>(spec, 31000 + trial);
    for (auto& v : params.values) {
      v += 0.01 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5);
    }
    const auto batch = testsupport::random_batch(spec, rng, 5);
    const auto analytic = backward<double>(spec, params, batch);
    const auto numeric =
        testsupport::finite_difference_gradient(spec, params, batch, 1e-5);
    worst = std::max(worst, testsupport::max_relative_error(
                                analytic.gradient.values, numeric));
    ++nets;
  }
  std::snprintf(buf, sizeof buf, "%d nets, max relative error %.3g (< 1e-4)",
                nets, worst);
  return {nets >= 10 && worst < 1e-4, buf};
}

// --- 3: fedavg identity oracles -------------------------------------------

ArchitectureSpec oracle_spec() {
  ArchitectureSpec spec;
  spec.window_len = 9;
  spec.layers = {Conv1dLayer{1, 2, 3, 1, Activation::relu},
                 DenseLayer{14, 4, Activation::relu},
                 DenseLayer{4, 1, Activation::linear}};
  validate(spec);
  return spec;
}

std::shared_ptr<const WindowedDataset> oracle_dataset(std::size_t windows,
                                                      std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_samples = windows + 8;
  cfg.appliances = {{"a", 150.0, 0.4, 12}, {"b", 90.0, 0.5, 17}};
  cfg.noise_std = 10.0;
  cfg.seed = seed;
  const auto synth = synth_generate(cfg);
  const auto in_stats = normalize_fit(synth.total.values);
  const auto tg_stats = normalize_fit(synth.appliances[0].values);
  auto ds = make_windows(synth.total, synth.appliances[0], 9, {"a", 100.0},
                         in_stats, tg_stats);
  return std::make_shared<WindowedDataset>(std::move(ds));
}

Outcome criterion_fedavg_identities() {
  const auto spec = oracle_spec();

  // (a) one-client federation vs centralized, bitwise
  FederationConfig cfg;
  cfg.client_count = 1;
  cfg.rounds = 5;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 7;
  cfg.optimizer = OptimizerKind::adam;
  cfg.eval_every = 0;
  auto full = oracle_dataset(80, 3);
  std::vector<std::shared_ptr<const WindowedDataset>> one = {full};
  auto clients = make_clients(spec, cfg, one);
  const auto fed = run_federation(spec, cfg, clients, nullptr);
  const auto central = train_central(spec, cfg, *full, nullptr);
  bool bitwise = fed.final_params.values == central.final_params.values;
  for (std::size_t r = 0; r < fed.records.size() && bitwise; ++r) {
    bitwise = fed.records[r].global_params_digest ==
              central.records[r].global_params_digest;
  }

  // (b) K=4 replicated full-batch sgd vs centralized, 1e-6 relative per round
  FederationConfig rep = cfg;
  rep.client_count = 4;
  rep.rounds = 5;
  rep.local_epochs = 1;
  rep.batch_size = 1 << 20;
  rep.optimizer = OptimizerKind::sgd;
  rep.hyper.lr0 = 0.05;
  rep.hyper.decay_gamma = 0.9;
  std::vector<std::shared_ptr<const WindowedDataset>> replicas(4, full);
  auto rep_clients = make_clients(spec, rep, replicas);

  ClientState site;
  site.client_id = 0;
  site.dataset = full;
  site.optimizer_state = make_optimizer_state<float>(rep.optimizer, param_count(spec));

  ParameterVector fed_global = init_params<float>(spec, rep.seed);
  ParameterVector central_params = fed_global;
  double worst_rel = 0.0;
  for (int round = 0; round < rep.rounds; ++round) {
    const auto rr = run_round(spec, fed_global, rep_clients, round, rep);
    fed_global = rr.global;
    auto res = local_update(spec, site, central_params, rep.local_epochs, round, rep);
    site = std::move(res.client);
    central_params = site.params;
    for (std::size_t i = 0; i < central_params.values.size(); ++i) {
      const double denom =
          std::max(1e-12, std::fabs(static_cast<double>(central_params.values[i])));
      worst_rel = std::max(
          worst_rel,
          std::fabs(static_cast<double>(fed_global.values[i]) -
                    static_cast<double>(central_params.values[i])) / denom);
    }
  }

  std::snprintf(buf, sizeof buf,
                "K=1 bitwise=%s; K=4 replicated max relative drift %.3g (<= 1e-6)",
                bitwise ? "yes" : "NO", worst_rel);
  return {bitwise && worst_rel <= 1e-6, buf};
}

// --- 4: aggregation oracle -------------------------------------------------

Outcome criterion_aggregation() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  double worst = 0.0;
  bool bounds_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n_params = 1 + rng() % 64;
    const std::size_t k = 1 + rng() % 12;
    std::vector<BasicClientUpdate<double>> ups(k);
    for (std::size_t c = 0; c < k; ++c) {
      ups[c].client_id = static_cast<int>(c);
      ups[c].n_k = 1 + rng() % 100000;
      ups[c].params.spec_hash = 1;
      ups[c].params.values.resize(n_params);
      for (auto& v : ups[c].params.values) v = dist(rng);
    }
    const auto out =
        aggregate<double>(std::span<const BasicClientUpdate<double>>(ups));
    double n_total = 0.0;
    for (const auto& u : ups) n_total += static_cast<double>(u.n_k);
    for (std::size_t i = 0; i < n_params; ++i) {
      double ref = 0.0, lo = ups[0].params.values[i], hi = lo;
      for (const auto& u : ups) {
        ref += static_cast<double>(u.n_k) / n_total * u.params.values[i];
        lo = std::min(lo, u.params.values[i]);
        hi = std::max(hi, u.params.values[i]);
      }
      worst = std::max(worst,
                       std::fabs(out.values[i] - ref) / std::max(1.0, std::fabs(ref)));
      if (out.values[i] < lo - 1e-12 || out.values[i] > hi + 1e-12) {
        bounds_ok = false;
      }
    }
  }
  std::snprintf(buf, sizeof buf,
                "200 randomized sets, max deviation %.3g (<= 1e-12), bounds %s",
                worst, bounds_ok ? "held" : "VIOLATED");
  return {worst <= 1e-12 && bounds_ok, buf};
}

// --- 5: synthetic end-to-end trend ------------------------------------------

Outcome criterion_end_to_end() {
  auto run_cfg = preset("synthetic-small");
  const auto spec = run_cfg.resolve_architecture();
  const auto fed_cfg = run_cfg.federation();
  const auto data = prepare_datasets(run_cfg);

  auto clients = make_clients(spec, fed_cfg, data.owners);
  const auto fed = run_federation(spec, fed_cfg, clients, data.test.get());
  const double loss_first = weighted_mean_loss(fed.records.front());
  const double loss_last = weighted_mean_loss(fed.records.back());
  const auto fed_report = evaluate_model(spec, fed.final_params, *data.test,
                                         run_cfg.threshold_watts, run_cfg.mode);

  const auto full = concat_owners(data);
  const auto central = train_central(spec, fed_cfg, full, nullptr);
  const auto cent_report = evaluate_model(spec, central.final_params, *data.test,
                                          run_cfg.threshold_watts, run_cfg.mode);

  const auto locals = train_local_baselines(spec, fed_cfg, data.owners, *data.test);
  double avg_mae_loc = 0.0;
  for (const auto& l : locals) avg_mae_loc += l.report.mae;
  avg_mae_loc /= static_cast<double>(locals.size());

  const double imp_mae =
      100.0 * (avg_mae_loc - fed_report.mae) / avg_mae_loc;
  const double gap_mae =
      100.0 * (cent_report.mae - fed_report.mae) / cent_report.mae;

  const bool loss_halved = loss_last < 0.5 * loss_first;
  const bool improves = imp_mae > 0.0;
  const bool near_central = std::fabs(gap_mae) <= 25.0;
  std::snprintf(buf, sizeof buf,
                "loss %.4f->%.4f (ratio %.2f, < 0.5); Imp_MAE %.1f%% (> 0); "
                "Gap_MAE %.1f%% (|.| <= 25); fed %.2f W cent %.2f W loc %.2f W",
                loss_first, loss_last, loss_last / loss_first, imp_mae, gap_mae,
                fed_report.mae, cent_report.mae, avg_mae_loc);
  return {loss_halved && improves && near_central, buf};
}

// --- 6: scalability trend ----------------------------------------------------

Outcome criterion_scalability() {
  const std::uint64_t seeds[] = {11, 12, 13};
  double mae_k2 = 0.0, mae_k8 = 0.0;
  for (const std::uint64_t seed : seeds) {
    for (const int k : {2, 8}) {
      auto run_cfg = preset("synthetic-small");
      run_cfg.seed = seed;
      run_cfg.clients = k;
      run_cfg.rounds = 10;
      run_cfg.samples_per_owner = 1500;
      run_cfg.test_samples = 2000;
      run_cfg.synthetic.n_samples = 15000;
      run_cfg.synthetic.seed = seed;
      const auto spec = run_cfg.resolve_architecture();
      const auto fed_cfg = run_cfg.federation();
      const auto data = prepare_datasets(run_cfg);
      auto clients = make_clients(spec, fed_cfg, data.owners);
      const auto fed = run_federation(spec, fed_cfg, clients, nullptr);
      const auto report = evaluate_model(spec, fed.final_params, *data.test,
                                         run_cfg.threshold_watts, run_cfg.mode);
      (k == 2 ? mae_k2 : mae_k8) += report.mae / 3.0;
    }
  }
  std::snprintf(buf, sizeof buf,
                "3-seed mean federated MAE: K=8 %.2f W <= K=2 %.2f W", mae_k8,
                mae_k2);
  return {mae_k8 <= mae_k2, buf};
}

// --- 7: transport transparency ----------------------------------------------

Outcome criterion_transport() {
  const auto spec = oracle_spec();
  FederationConfig cfg;
  cfg.client_count = 2;
  cfg.rounds = 3;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 77;
  cfg.optimizer = OptimizerKind::adam;
  cfg.eval_every = 0;

  auto data0 = oracle_dataset(60, 5);
  auto data1 = oracle_dataset(72, 6);
  std::vector<std::shared_ptr<const WindowedDataset>> datasets = {data0, data1};
  auto clients = make_clients(spec, cfg, datasets);
  const auto reference = run_federation(spec, cfg, clients, nullptr);

  netproto::ServeOptions so;
  so.spec = spec;
  so.cfg = cfg;
  std::promise<std::uint16_t> port_promise;
  auto port_future = port_promise.get_future();
  so.on_listening = [&](std::uint16_t p) { port_promise.set_value(p); };

  netproto::ServeResult net_result;
  std::exception_ptr server_error;
  std::thread server([&] {
    try {
      net_result = netproto::serve(so);
    } catch (...) {
      server_error = std::current_exception();
    }
  });
  const std::uint16_t port = port_future.get();

  std::vector<std::exception_ptr> client_errors(2);
  auto client = [&](int id, std::shared_ptr<const WindowedDataset> ds) {
    return std::thread([&, id, ds] {
      try {
        netproto::ClientOptions co;
        co.port = port;
        co.client_id = id;
        co.dataset = ds;
        co.spec = spec;
        co.cfg = cfg;
        (void)netproto::client_run(co);
      } catch (...) {
        client_errors[static_cast<std::size_t>(id)] = std::current_exception();
      }
    });
  };
  auto c0 = client(0, data0);
  auto c1 = client(1, data1);
  c0.join();
  c1.join();
  server.join();
  if (server_error || client_errors[0] || client_errors[1]) {
    return {false, "networked run raised an error"};
  }

  bool identical = net_result.records.size() == reference.records.size() &&
                   net_result.final_params.values == reference.final_params.values;
  for (std::size_t r = 0; identical && r < reference.records.size(); ++r) {
    identical = net_result.records[r].global_params_digest ==
                reference.records[r].global_params_digest;
  }
  std::snprintf(buf, sizeof buf,
                "%zu rounds over loopback, per-round digests %s",
                net_result.records.size(),
                identical ? "bitwise identical" : "DIFFER");
  return {identical, buf};
}

// --- 8: frame fuzzing ---------------------------------------------------------

netproto::Message random_message(std::mt19937_64& rng) {
  using namespace netproto;
  auto rand_params = [&](std::size_t max_count) {
    ParameterVector p;
    p.spec_hash = rng();
    p.values.resize(rng() % (max_count + 1));
    for (auto& v : p.values) {
      const std::uint32_t bits = static_cast<std::uint32_t>(rng());
      std::memcpy(&v, &bits, 4);
    }
    return p;
  };
  switch (rng() % 5) {
    case 0: return Hello{static_cast<std::uint32_t>(rng()), rng(), rng()};
    case 1: return Global{static_cast<std::uint32_t>(rng() % 1000),
                          static_cast<double>(rng() % 977) * 1e-6, rand_params(24)};
    case 2: return Update{static_cast<std::uint32_t>(rng() % 1000),
                          static_cast<std::uint32_t>(rng()), rng() % 100000,
                          static_cast<double>(rng() % 997) * 1e-3, rand_params(24)};
    case 3: return RoundDone{static_cast<std::uint32_t>(rng() % 1000), rng()};
    default: return Shutdown{static_cast<std::uint32_t>(rng() % 4)};
  }
}

Outcome criterion_frames() {
  using namespace netproto;
  std::mt19937_64 rng(0xF00D);

  int roundtrip_failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto msg = random_message(rng);
    const auto frame = encode_frame(msg);
    const auto res = decode_frame(frame);
    if (res.status != DecodeStatus::ok || res.consumed != frame.size() ||
        encode_frame(*res.message) != frame) {
      ++roundtrip_failures;
    }
  }

  int corruption_failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto msg = random_message(rng);
    auto frame = encode_frame(msg);
    const std::size_t pos = rng() % frame.size();
    frame[pos] = static_cast<std::uint8_t>(frame[pos] + 1 +
                                           static_cast<std::uint8_t>(rng() % 255));
    const auto res = decode_frame(frame);
    bool rejected_correctly;
    if (pos < 4) {
      rejected_correctly = res.status == DecodeStatus::bad_magic;
    } else if (pos == 4) {
      rejected_correctly = res.status == DecodeStatus::bad_version;
    } else if (pos == 5) {
      rejected_correctly = res.status == DecodeStatus::bad_type ||
                           res.status == DecodeStatus::bad_payload;
    } else if (pos < 10) {
      rejected_correctly = res.status == DecodeStatus::need_more ||
                           res.status == DecodeStatus::bad_crc ||
                           res.status == DecodeStatus::bad_payload;
    } else {
      rejected_correctly = res.status == DecodeStatus::bad_crc;
    }
    if (!rejected_correctly) ++corruption_failures;
  }

  std::snprintf(buf, sizeof buf,
                "10000 round trips (%d failures), 10000 corruptions (%d misclassified)",
                roundtrip_failures, corruption_failures);
  return {roundtrip_failures == 0 && corruption_failures == 0, buf};
}

// --- 9: data pipeline laws -----------------------------------------------------

Outcome criterion_pipeline_laws() {
  std::mt19937_64 rng(0xDA7A);
  int cases = 0;
  int violations = 0;
  const ApplianceThreshold thr{"x", 77.0};
  while (cases < 1200) {
    const int w = 3 + 2 * static_cast<int>(rng() % 15);
    const std::size_t t_len = static_cast<std::size_t>(w) + rng() % 150;
    std::vector<float> tv(t_len), av(t_len);
    for (auto& v : tv) v = static_cast<float>(rng() % 1000) / 3.0f;
    for (auto& v : av) v = static_cast<float>(rng() % 155);
    LoadSeries total;
    total.period_s = 8.0;
    total.values = tv;
    LoadSeries app = total;
    app.kind = SeriesKind::appliance;
    app.values = av;

    NormalizationStats in_stats, tg_stats;
    try {
      in_stats = normalize_fit(tv);
      tg_stats = normalize_fit(av);
    } catch (const DataError&) {
      continue;  // constant draw; not a valid case
    }
    const auto ds = make_windows(total, app, w, thr, in_stats, tg_stats);

    // window count law
    if (ds.count != t_len - static_cast<std::size_t>(w) + 1) ++violations;
    // midpoint alignment and strict threshold labels
    const std::size_t mid = static_cast<std::size_t>(w) / 2;
    for (std::size_t i = 0; i < ds.count; ++i) {
      if (ds.target_power[i] != av[i + mid]) ++violations;
      if (ds.target_on[i] != (av[i + mid] > thr.watts ? 1 : 0)) ++violations;
    }
    // disjoint in-order partition cover
    const int k = 1 + static_cast<int>(rng() % 4);
    if (ds.count >= static_cast<std::size_t>(k)) {
      const std::size_t per = ds.count / static_cast<std::size_t>(k);
      const auto parts = partition_owners(ds, k, per);
      std::size_t covered = 0;
      std::size_t window_index = 0;
      for (const auto& owner : parts.owners) {
        for (std::size_t i = 0; i < owner.count; ++i, ++window_index) {
          if (owner.target_power[i] != ds.target_power[window_index]) ++violations;
          ++covered;
        }
      }
      if (covered != static_cast<std::size_t>(k) * per) ++violations;
      if (parts.leftover_windows != ds.count - covered) ++violations;
    }
    ++cases;
  }
  std::snprintf(buf, sizeof buf, "%d randomized cases, %d violations", cases,
                violations);
  return {violations == 0 && cases >= 1000, buf};
}

// --- 10: metric oracles ---------------------------------------------------------

Outcome criterion_metric_oracles() {
  std::mt19937_64 rng(0xBEEF);
  std::uniform_real_distribution<double> dist(-1000.0, 1000.0);
  double worst_mae_dev = 0.0;
  int f1_violations = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 100;
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = dist(rng);
    for (auto& v : b) v = dist(rng);
    double naive = 0.0;
    for (std::size_t i = 0; i < n; ++i) naive += std::fabs(a[i] - b[i]);
    naive /= static_cast<double>(n);
    worst_mae_dev = std::max(
        worst_mae_dev, std::fabs(mae(a, b) - naive) / std::max(1.0, naive));

    std::vector<std::uint8_t> p(n), t(n);
    for (auto& v : p) v = rng() % 2;
    for (auto& v : t) v = rng() % 2;
    const auto c = confusion(p, t);
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += (p[i] && t[i]);
      tn += (!p[i] && !t[i]);
      fp += (p[i] && !t[i]);
      fn += (!p[i] && t[i]);
    }
    if (c.tp != tp || c.tn != tn || c.fp != fp || c.fn != fn) ++f1_violations;
    const double denom = static_cast<double>(2 * tp + fn + fp);
    const double naive_f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    if (std::fabs(f1(c) - naive_f1) > 1e-12) ++f1_violations;
  }

  // documented degenerate and error cases
  bool degenerate = false;
  const double f1_empty = f1({0, 5, 0, 0}, &degenerate);
  bool flags_ok = degenerate && f1_empty == 0.0;
  bool errors_ok = true;
  try {
    (void)improvement(0.0, 1.0, 0.5, 0.5);
    errors_ok = false;
  } catch (const DataError&) {
  }
  try {
    (void)gap(1.0, 1.0, 0.0, 0.5);
    errors_ok = false;
  } catch (const DataError&) {
  }

  std::snprintf(buf, sizeof buf,
                "max MAE deviation %.3g (<= 1e-12), %d confusion/F1 mismatches, "
                "degenerate flag %s, zero-denominator errors %s",
                worst_mae_dev, f1_violations, flags_ok ? "ok" : "MISSING",
                errors_ok ? "raised" : "NOT RAISED");
  return {worst_mae_dev <= 1e-12 && f1_violations == 0 && flags_ok && errors_ok, buf};
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "indicator arithmetic reproduction", criterion_indicators},
      {2, "gradient correctness", criterion_gradients},
      {3, "fedavg identity oracles", criterion_fedavg_identities},
      {4, "aggregation oracle", criterion_aggregation},
      {5, "synthetic end-to-end trends", criterion_end_to_end},
      {6, "scalability trend", criterion_scalability},
      {7, "transport transparency", criterion_transport},
      {8, "frame fuzzing", criterion_frames},
      {9, "data pipeline laws", criterion_pipeline_laws},
      {10, "metric oracles", criterion_metric_oracles},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    std::printf("[%s] criterion %2d: %s — %s (%lld ms)\n",
                outcome.pass ? "PASS" : "FAIL", c.number, c.name,
                outcome.detail.c_str(), static_cast<long long>(ms));
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
  } else {
    std::printf("all criteria passed\n");
  }
  return failures == 0 ? 0 : 1;
}
