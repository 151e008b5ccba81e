#include "fednilm/manifest.hpp"

#include <fstream>

#include <json.hpp>

namespace fednilm {

using nlohmann::json;

namespace {

json metric_json(const MetricReport& r) {
  return json{{"mae", r.mae},
              {"f1", r.f1},
              {"precision", r.precision},
              {"recall", r.recall},
              {"tp", r.counts.tp},
              {"tn", r.counts.tn},
              {"fp", r.counts.fp},
              {"fn", r.counts.fn},
              {"n_points", r.n_points},
              {"f1_degenerate", r.f1_degenerate}};
}

MetricReport metric_from(const json& j) {
  MetricReport r;
  r.mae = j.at("mae").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.counts.tp = j.at("tp").get<std::uint64_t>();
  r.counts.tn = j.at("tn").get<std::uint64_t>();
  r.counts.fp = j.at("fp").get<std::uint64_t>();
  r.counts.fn = j.at("fn").get<std::uint64_t>();
  r.n_points = j.at("n_points").get<std::size_t>();
  r.f1_degenerate = j.at("f1_degenerate").get<bool>();
  return r;
}

}  // namespace

struct ManifestWriter::Impl {
  std::ofstream out;
  std::string path;
};

ManifestWriter::ManifestWriter(
    const std::string& path, const std::string& run_kind, const RunConfig& cfg,
    const std::map<std::string, std::uint64_t>& dataset_digests)
    : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  impl_->out.open(path, std::ios::trunc);
  if (!impl_->out) {
    throw DataError("cannot write manifest: " + path);
  }
  json meta;
  meta["type"] = "meta";
  meta["run_kind"] = run_kind;
  meta["tool_version"] = kToolVersion;
  meta["config"] = json::parse(run_config_json(cfg));
  json digests;
  for (const auto& [name, digest] : dataset_digests) {
    digests[name] = digest;
  }
  meta["dataset_digests"] = digests;
  write_line(meta.dump());
}

ManifestWriter::~ManifestWriter() = default;

void ManifestWriter::write_line(const std::string& line) {
  impl_->out << line << '\n';
  impl_->out.flush();
  if (!impl_->out) {
    throw DataError("short write to manifest: " + impl_->path);
  }
}

void ManifestWriter::round(const RoundRecord& record) {
  json j;
  j["type"] = "round";
  j["round"] = record.round;
  j["lr"] = record.lr;
  json per_client = json::array();
  double loss_weighted = 0.0;
  std::uint64_t n_total = 0;
  for (const auto& c : record.per_client) {
    per_client.push_back({{"client_id", c.client_id},
                          {"n_k", c.n_k},
                          {"mean_train_loss", c.mean_train_loss}});
    loss_weighted += c.mean_train_loss * static_cast<double>(c.n_k);
    n_total += c.n_k;
  }
  j["per_client"] = per_client;
  j["mean_loss"] = n_total ? loss_weighted / static_cast<double>(n_total) : 0.0;
  j["global_digest"] = record.global_params_digest;
  j["wall_ms"] = record.wall_ms;
  if (record.bytes_transferred != 0) {
    j["bytes_transferred"] = record.bytes_transferred;
  }
  if (record.eval.has_value()) {
    j["eval"] = metric_json(*record.eval);
  }
  write_line(j.dump());
}

void ManifestWriter::local_site(int client_id, std::uint64_t params_digest,
                                const MetricReport& report) {
  json j;
  j["type"] = "local_site";
  j["client_id"] = client_id;
  j["params_digest"] = params_digest;
  j["metrics"] = metric_json(report);
  write_line(j.dump());
}

void ManifestWriter::final_result(std::uint64_t final_digest,
                                  const std::optional<MetricReport>& metrics,
                                  std::int64_t wall_ms_total) {
  json j;
  j["type"] = "final";
  j["final_digest"] = final_digest;
  j["wall_ms_total"] = wall_ms_total;
  if (metrics.has_value()) {
    j["metrics"] = metric_json(*metrics);
  }
  write_line(j.dump());
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open manifest: " + path);
  }
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.value("type", "");
    if (type == "meta") {
      saw_meta = true;
      m.run_kind = j.at("run_kind").get<std::string>();
      const auto& cfg = j.at("config");
      m.scenario = cfg.value("scenario", "");
      m.appliance = cfg.value("appliance", "");
      m.mode = cfg.value("mode", "");
      m.clients = cfg.value("clients", 0);
      if (j.contains("dataset_digests")) {
        for (const auto& [name, digest] : j.at("dataset_digests").items()) {
          m.dataset_digests[name] = digest.get<std::uint64_t>();
        }
      }
    } else if (type == "round") {
      ManifestRound r;
      r.round = j.at("round").get<int>();
      r.lr = j.at("lr").get<double>();
      r.mean_loss = j.at("mean_loss").get<double>();
      r.global_digest = j.at("global_digest").get<std::uint64_t>();
      if (j.contains("eval")) {
        r.eval = metric_from(j.at("eval"));
      }
      m.rounds.push_back(std::move(r));
    } else if (type == "local_site") {
      ManifestLocalSite s;
      s.client_id = j.at("client_id").get<int>();
      s.report = metric_from(j.at("metrics"));
      m.local_sites.push_back(std::move(s));
    } else if (type == "final") {
      m.final_digest = j.at("final_digest").get<std::uint64_t>();
      if (j.contains("metrics")) {
        m.final_metrics = metric_from(j.at("metrics"));
      }
    } else {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unknown manifest line type '" + type + "'");
    }
  }
  if (!saw_meta) {
    throw DataError(path + ": missing meta line");
  }
  return m;
}

}  // namespace fednilm
