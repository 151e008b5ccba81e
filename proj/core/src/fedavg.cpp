#include "fednilm/fedavg.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "fednilm/checkpoint.hpp"
#include "fednilm/rng.hpp"

namespace fednilm {

void FederationConfig::validate() const {
  if (client_count < 1) throw ConfigError("federation: client_count must be >= 1");
  if (rounds < 1) throw ConfigError("federation: rounds must be >= 1");
  if (local_epochs < 1) throw ConfigError("federation: local_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("federation: batch_size must be >= 1");
  if (eval_every < 0) throw ConfigError("federation: eval_every must be >= 0");
  if (hyper.lr0 < 0.0) throw ConfigError("federation: lr0 must be non-negative");
  if (!(hyper.decay_gamma > 0.0 && hyper.decay_gamma <= 1.0)) {
    throw ConfigError("federation: decay_gamma must be in (0,1]");
  }
}

namespace {

// E epochs of mini-batch training over one dataset. Epoch order comes from
// one rng stream seeded per (run seed, site id, round); batches are chunks
// of the shuffled index list with indices re-sorted inside each chunk so a
// full-batch epoch visits samples in time order.
struct EpochRunResult {
  ParameterVector params;
  OptimizerState opt;
  double mean_batch_loss = 0.0;
};

EpochRunResult run_epochs(const ArchitectureSpec& spec, const WindowedDataset& ds,
                          ParameterVector params, OptimizerState opt,
                          int epochs, double lr, std::uint64_t order_seed,
                          const FederationConfig& cfg) {
  const std::size_t n = ds.count;
  const std::size_t w = static_cast<std::size_t>(ds.window_len);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const bool classify = spec.head_mode == HeadMode::classification;

  Rng rng(order_seed);
  std::vector<std::size_t> order(n);
  Batch b;
  b.width = ds.window_len;
  double loss_sum = 0.0;
  std::size_t batch_count = 0;

  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t base = 0; base < n; base += batch) {
      const std::size_t rows = std::min(batch, n - base);
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(base),
                order.begin() + static_cast<std::ptrdiff_t>(base + rows));
      b.rows = rows;
      b.inputs.resize(rows * w);
      b.targets.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = order[base + r];
        std::copy_n(ds.inputs.data() + src * w, w, b.inputs.data() + r * w);
        b.targets[r] = classify ? static_cast<float>(ds.target_on[src])
                                : ds.target_power_norm[src];
      }
      auto back = backward<float>(spec, params, b);
      loss_sum += back.loss;
      ++batch_count;
      // lr == 0 freezes parameters (and optimizer moments) for the round.
      if (lr > 0.0) {
        auto stepped = optimizer_step<float>(opt, params, back.gradient, lr, cfg.hyper);
        params = std::move(stepped.params);
        opt = std::move(stepped.state);
      }
    }
  }
  return {std::move(params), std::move(opt),
          batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0};
}

}  // namespace

LocalUpdateResult local_update(const ArchitectureSpec& spec, ClientState client,
                               const ParameterVector& global_params, int local_epochs,
                               int round, const FederationConfig& cfg) {
  if (!client.dataset || client.dataset->count == 0) {
    throw TrainingError("local_update: client " + std::to_string(client.client_id) +
                        " has no training data");
  }
  if (local_epochs < 1) {
    throw ConfigError("local_update: local_epochs must be >= 1");
  }
  detail::check_hash(spec_hash(spec), global_params.spec_hash, "local_update");

  client.params = global_params;
  if (cfg.reset_optimizer_each_round) {
    client.optimizer_state =
        make_optimizer_state<float>(cfg.optimizer, global_params.count());
  }
  const double lr = lr_schedule(static_cast<std::uint64_t>(round), cfg.hyper);
  const std::uint64_t order_seed = derive_round_seed(
      cfg.seed, static_cast<std::uint64_t>(client.client_id),
      static_cast<std::uint64_t>(round));
  auto run = run_epochs(spec, *client.dataset, std::move(client.params),
                        std::move(client.optimizer_state), local_epochs, lr,
                        order_seed, cfg);
  client.params = std::move(run.params);
  client.optimizer_state = std::move(run.opt);
  return {std::move(client), run.mean_batch_loss};
}

RoundResult run_round(const ArchitectureSpec& spec, const ParameterVector& global,
                      std::vector<ClientState>& clients, int round,
                      const FederationConfig& cfg) {
  if (clients.empty()) {
    throw TrainingError("run_round: no clients");
  }
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<LocalUpdateResult> results(clients.size());
  std::vector<std::exception_ptr> failures(clients.size());

  auto train_one = [&](std::size_t i) {
    try {
      results[i] = local_update(spec, std::move(clients[i]), global,
                                cfg.local_epochs, round, cfg);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (cfg.parallel_clients && clients.size() > 1 && hw > 1) {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    const unsigned workers = std::min<std::size_t>(hw, clients.size());
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < clients.size();
             i = next.fetch_add(1)) {
          train_one(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t i = 0; i < clients.size(); ++i) train_one(i);
  }

  // Any client failure aborts the round; no partial aggregation.
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (failures[i]) {
      try {
        std::rethrow_exception(failures[i]);
      } catch (const std::exception& e) {
        throw TrainingError("round " + std::to_string(round) + " aborted: client " +
                            std::to_string(i) + " failed: " + e.what());
      }
    }
  }

  std::vector<ClientUpdate> updates;
  updates.reserve(results.size());
  RoundRecord record;
  record.round = round;
  record.lr = lr_schedule(static_cast<std::uint64_t>(round), cfg.hyper);
  for (auto& r : results) {
    updates.push_back({r.client.client_id, r.client.params, r.client.sample_count()});
    record.per_client.push_back(
        {r.client.client_id, r.client.sample_count(), r.mean_train_loss});
  }
  std::sort(record.per_client.begin(), record.per_client.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });

  RoundResult out;
  out.global = aggregate<float>(std::span<const ClientUpdate>(updates));
  record.global_params_digest = params_digest(out.global);
  record.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  out.record = std::move(record);

  for (std::size_t i = 0; i < results.size(); ++i) {
    clients[i] = std::move(results[i].client);
  }
  return out;
}

FederationResult run_federation(const ArchitectureSpec& spec,
                                const FederationConfig& cfg,
                                std::vector<ClientState>& clients,
                                const WindowedDataset* eval_set,
                                const RoundSink& on_round) {
  cfg.validate();
  if (clients.empty()) {
    throw TrainingError("run_federation: no clients");
  }
  validate(spec);

  // Step 1: the global model is initialized centrally.
  ParameterVector global = init_params<float>(spec, cfg.seed);

  FederationResult out;
  out.records.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int round = 0; round < cfg.rounds; ++round) {
    auto rr = run_round(spec, global, clients, round, cfg);
    global = std::move(rr.global);
    const bool last = round + 1 == cfg.rounds;
    if (eval_set != nullptr && cfg.eval_every > 0 &&
        ((round + 1) % cfg.eval_every == 0 || last)) {
      rr.record.eval = evaluate_model(spec, global, *eval_set,
                                      cfg.threshold_watts, spec.head_mode);
    }
    if (on_round) on_round(rr.record);
    out.records.push_back(std::move(rr.record));
  }
  out.final_params = std::move(global);
  return out;
}

SingleSiteResult train_single_site(const ArchitectureSpec& spec,
                                   const FederationConfig& cfg,
                                   const WindowedDataset& dataset,
                                   const WindowedDataset* eval_set, int site_id,
                                   const RoundSink& on_round) {
  cfg.validate();
  validate(spec);
  if (dataset.count == 0) {
    throw TrainingError("train_single_site: empty dataset");
  }

  ClientState site;
  site.client_id = site_id;
  site.dataset = std::make_shared<WindowedDataset>(dataset);
  site.optimizer_state = make_optimizer_state<float>(cfg.optimizer, param_count(spec));
  site.params = init_params<float>(spec, cfg.seed);

  SingleSiteResult out;
  out.records.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int round = 0; round < cfg.rounds; ++round) {
    ParameterVector broadcast = site.params;
    auto res = local_update(spec, std::move(site), broadcast, cfg.local_epochs,
                            round, cfg);
    site = std::move(res.client);
    RoundRecord record;
    record.round = round;
    record.lr = lr_schedule(static_cast<std::uint64_t>(round), cfg.hyper);
    record.per_client.push_back({site_id, site.sample_count(), res.mean_train_loss});
    record.global_params_digest = params_digest(site.params);
    const bool last = round + 1 == cfg.rounds;
    if (eval_set != nullptr && cfg.eval_every > 0 &&
        ((round + 1) % cfg.eval_every == 0 || last)) {
      record.eval = evaluate_model(spec, site.params, *eval_set,
                                   cfg.threshold_watts, spec.head_mode);
    }
    if (on_round) on_round(record);
    out.records.push_back(std::move(record));
  }
  out.final_params = std::move(site.params);
  return out;
}

SingleSiteResult train_central(const ArchitectureSpec& spec,
                               const FederationConfig& cfg,
                               const WindowedDataset& dataset,
                               const WindowedDataset* eval_set,
                               const RoundSink& on_round) {
  return train_single_site(spec, cfg, dataset, eval_set, /*site_id=*/0, on_round);
}

std::vector<LocalBaselineResult> train_local_baselines(
    const ArchitectureSpec& spec, const FederationConfig& cfg,
    const std::vector<std::shared_ptr<const WindowedDataset>>& datasets,
    const WindowedDataset& eval_set) {
  cfg.validate();
  std::vector<LocalBaselineResult> out;
  out.reserve(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    if (!datasets[k] || datasets[k]->count == 0) {
      throw TrainingError("train_local_baselines: client " + std::to_string(k) +
                          " has no training data");
    }
    auto res = train_single_site(spec, cfg, *datasets[k], nullptr,
                                 static_cast<int>(k));
    LocalBaselineResult r;
    r.client_id = static_cast<int>(k);
    r.report = evaluate_model(spec, res.final_params, eval_set,
                              cfg.threshold_watts, spec.head_mode);
    r.final_params = std::move(res.final_params);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ClientState> make_clients(
    const ArchitectureSpec& spec, const FederationConfig& cfg,
    const std::vector<std::shared_ptr<const WindowedDataset>>& datasets) {
  validate(spec);
  const std::size_t n_params = param_count(spec);
  std::vector<ClientState> clients;
  clients.reserve(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    ClientState c;
    c.client_id = static_cast<int>(k);
    c.dataset = datasets[k];
    c.optimizer_state = make_optimizer_state<float>(cfg.optimizer, n_params);
    clients.push_back(std::move(c));
  }
  return clients;
}

}  // namespace fednilm
