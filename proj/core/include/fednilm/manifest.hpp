#pragma once

// Run manifests: a JSON-lines log, one record per line. First line is the
// run metadata (config echo, dataset digests, tool version); then one line
// per federation round; local baselines add one line per site; the final
// line carries the end-of-run metrics. Manifests are self-contained: the
// compare command consumes them without touching raw data.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fednilm/config.hpp"
#include "fednilm/fedavg.hpp"
#include "fednilm/metrics.hpp"

namespace fednilm {

constexpr const char* kToolVersion = "0.1.0";

class ManifestWriter {
 public:
  ManifestWriter(const std::string& path, const std::string& run_kind,
                 const RunConfig& cfg,
                 const std::map<std::string, std::uint64_t>& dataset_digests);
  ~ManifestWriter();

  void round(const RoundRecord& record);
  void local_site(int client_id, std::uint64_t params_digest,
                  const MetricReport& report);
  void final_result(std::uint64_t final_digest,
                    const std::optional<MetricReport>& metrics,
                    std::int64_t wall_ms_total);

 private:
  void write_line(const std::string& line);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ManifestRound {
  int round = 0;
  double lr = 0.0;
  double mean_loss = 0.0;  // sample-weighted mean over clients
  std::uint64_t global_digest = 0;
  std::optional<MetricReport> eval;
};

struct ManifestLocalSite {
  int client_id = 0;
  MetricReport report;
};

struct Manifest {
  std::string run_kind;  // federated | central | local
  std::string scenario;
  std::string appliance;
  std::string mode;
  int clients = 0;
  std::map<std::string, std::uint64_t> dataset_digests;
  std::vector<ManifestRound> rounds;
  std::vector<ManifestLocalSite> local_sites;
  std::optional<MetricReport> final_metrics;
  std::uint64_t final_digest = 0;
};

Manifest read_manifest(const std::string& path);

}  // namespace fednilm
