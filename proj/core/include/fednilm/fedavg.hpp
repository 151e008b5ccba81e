#pragma once

// The federation engine: broadcast global parameters, run E local epochs on
// every owner, take the sample-count-weighted average of the returned
// parameters, repeat for R rounds. Centralized and local-only baseline
// trainers reuse the same local-updating code so the comparison is like for
// like (and so the one-client federation is bitwise identical to the
// centralized run).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fednilm/data.hpp"
#include "fednilm/metrics.hpp"
#include "fednilm/model.hpp"
#include "fednilm/optim.hpp"

namespace fednilm {

struct FederationConfig {
  int client_count = 1;   // K
  int rounds = 1;         // R
  int local_epochs = 1;   // E
  int batch_size = 512;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  OptimizerHyper hyper;
  int eval_every = 5;     // rounds between test-set evaluations (0 = never)
  bool reset_optimizer_each_round = false;
  double threshold_watts = 0.0;  // evaluation threshold
  bool parallel_clients = true;

  void validate() const;
};

struct ClientState {
  int client_id = 0;
  std::shared_ptr<const WindowedDataset> dataset;
  OptimizerState optimizer_state;
  ParameterVector params;

  std::size_t sample_count() const { return dataset ? dataset->count : 0; }
};

struct ClientRoundStats {
  int client_id = 0;
  std::size_t n_k = 0;
  double mean_train_loss = 0.0;
};

struct RoundRecord {
  int round = 0;
  double lr = 0.0;
  std::vector<ClientRoundStats> per_client;
  std::uint64_t global_params_digest = 0;
  std::optional<MetricReport> eval;
  std::int64_t wall_ms = 0;
  std::uint64_t bytes_transferred = 0;  // networked mode only
};

template <typename S>
struct BasicClientUpdate {
  int client_id = 0;
  BasicParameterVector<S> params;
  std::size_t n_k = 0;
};

using ClientUpdate = BasicClientUpdate<float>;

// Eq-style weighted average: out[i] = sum_k (n_k / n) params_k[i], summed
// in ascending client_id order with 64-bit accumulation, rounded once to
// the storage width.
template <typename S>
BasicParameterVector<S> aggregate(std::span<const BasicClientUpdate<S>> updates) {
  if (updates.empty()) {
    throw TrainingError("aggregate: no client updates");
  }
  std::vector<std::size_t> order(updates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return updates[a].client_id < updates[b].client_id;
  });

  const std::uint64_t hash = updates.front().params.spec_hash;
  const std::size_t count = updates.front().params.count();
  std::uint64_t n_total = 0;
  for (const auto& u : updates) {
    if (u.params.spec_hash != hash) {
      throw TrainingError("aggregate: spec hash mismatch across client updates");
    }
    if (u.params.count() != count) {
      throw TrainingError("aggregate: parameter count mismatch across client updates");
    }
    if (u.n_k == 0) {
      throw TrainingError("aggregate: client " + std::to_string(u.client_id) +
                          " reports zero samples");
    }
    n_total += u.n_k;
  }

  std::vector<double> acc(count, 0.0);
  for (std::size_t oi : order) {
    const auto& u = updates[oi];
    const double weight =
        static_cast<double>(u.n_k) / static_cast<double>(n_total);
    for (std::size_t i = 0; i < count; ++i) {
      acc[i] += weight * static_cast<double>(u.params.values[i]);
    }
  }

  BasicParameterVector<S> out;
  out.spec_hash = hash;
  out.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) out.values[i] = static_cast<S>(acc[i]);
  return out;
}

struct LocalUpdateResult {
  ClientState client;
  double mean_train_loss = 0.0;
};

// Step 3: replace the client's parameters with the broadcast global ones,
// then run E epochs of mini-batch training. Batch order is seeded from
// (run seed, client_id, round); within a batch, samples stay in time order.
LocalUpdateResult local_update(const ArchitectureSpec& spec, ClientState client,
                               const ParameterVector& global_params, int local_epochs,
                               int round, const FederationConfig& cfg);

struct RoundResult {
  ParameterVector global;
  RoundRecord record;
};

RoundResult run_round(const ArchitectureSpec& spec, const ParameterVector& global,
                      std::vector<ClientState>& clients, int round,
                      const FederationConfig& cfg);

struct FederationResult {
  ParameterVector final_params;
  std::vector<RoundRecord> records;
};

using RoundSink = std::function<void(const RoundRecord&)>;

// R rounds of broadcast / local update / aggregate. eval_set may be null;
// when present the global model is evaluated every eval_every rounds and on
// the final round.
FederationResult run_federation(const ArchitectureSpec& spec,
                                const FederationConfig& cfg,
                                std::vector<ClientState>& clients,
                                const WindowedDataset* eval_set,
                                const RoundSink& on_round = nullptr);

struct SingleSiteResult {
  ParameterVector final_params;
  std::vector<RoundRecord> records;  // one per virtual round of E epochs
};

// Same budget as a federated client: R virtual rounds of E epochs with the
// identical learning-rate schedule and batch-order seed stream for
// `site_id`. The centralized baseline is site_id 0 over the union dataset.
SingleSiteResult train_single_site(const ArchitectureSpec& spec,
                                   const FederationConfig& cfg,
                                   const WindowedDataset& dataset,
                                   const WindowedDataset* eval_set, int site_id,
                                   const RoundSink& on_round = nullptr);

SingleSiteResult train_central(const ArchitectureSpec& spec,
                               const FederationConfig& cfg,
                               const WindowedDataset& dataset,
                               const WindowedDataset* eval_set,
                               const RoundSink& on_round = nullptr);

struct LocalBaselineResult {
  int client_id = 0;
  ParameterVector final_params;
  MetricReport report;
};

// Each client trains in isolation for the same total epoch budget, then is
// evaluated on the shared test set.
std::vector<LocalBaselineResult> train_local_baselines(
    const ArchitectureSpec& spec, const FederationConfig& cfg,
    const std::vector<std::shared_ptr<const WindowedDataset>>& datasets,
    const WindowedDataset& eval_set);

// Builds ready-to-train client states (model parameters empty until the
// first broadcast; optimizer state sized for the spec).
std::vector<ClientState> make_clients(
    const ArchitectureSpec& spec, const FederationConfig& cfg,
    const std::vector<std::shared_ptr<const WindowedDataset>>& datasets);

}  // namespace fednilm
