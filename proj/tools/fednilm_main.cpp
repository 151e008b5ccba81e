// fednilm: federated seq2point load disaggregation experiment runner.
//
// Subcommands: synth, ingest, train-federated [--distributed], train-central,
// train-local, evaluate, compare, export-plot, serve, client.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 protocol error,
// 5 training aborted.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fednilm/checkpoint.hpp"
#include "fednilm/config.hpp"
#include "fednilm/manifest.hpp"
#include "fednilm/metrics.hpp"
#include "fednilm/netproto.hpp"
#include "fednilm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fednilm;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset_name;
  std::string out_dir;
  std::int64_t seed = -1;
  int rounds = -1;
  int clients = -1;
  int epochs = -1;
  int batch_size = -1;
  std::string mode;
  std::string appliance;
  double threshold = -1.0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run config JSON file");
  cmd->add_option("--preset", opts.preset_name,
                  "preset name: residential, industrial, synthetic-small");
  cmd->add_option("--out", opts.out_dir, "output directory override");
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--rounds", opts.rounds, "round count override");
  cmd->add_option("--clients", opts.clients, "owner count override");
  cmd->add_option("--epochs", opts.epochs, "local epoch count override");
  cmd->add_option("--batch-size", opts.batch_size, "batch size override");
  cmd->add_option("--mode", opts.mode, "regression or classification");
  cmd->add_option("--appliance", opts.appliance, "target appliance name");
  cmd->add_option("--threshold", opts.threshold, "power-on threshold, watts");
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = load_run_config(opts.config_path);
  } else if (!opts.preset_name.empty()) {
    cfg = preset(opts.preset_name);
  } else {
    throw ConfigError("supply --config or --preset");
  }
  if (!opts.preset_name.empty() && !opts.config_path.empty()) {
    throw ConfigError("--config and --preset are mutually exclusive; put "
                      "\"preset\" inside the config file instead");
  }
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.rounds > 0) cfg.rounds = opts.rounds;
  if (opts.clients > 0) cfg.clients = opts.clients;
  if (opts.epochs > 0) cfg.local_epochs = opts.epochs;
  if (opts.batch_size > 0) cfg.batch_size = opts.batch_size;
  if (!opts.mode.empty()) {
    if (opts.mode == "regression") cfg.mode = HeadMode::regression;
    else if (opts.mode == "classification") cfg.mode = HeadMode::classification;
    else throw ConfigError("--mode must be regression or classification");
  }
  if (!opts.appliance.empty()) {
    cfg.appliance = opts.appliance;
    if (const auto watts = default_threshold(opts.appliance); watts.has_value()) {
      cfg.threshold_watts = *watts;
    }
  }
  if (opts.threshold > 0.0) cfg.threshold_watts = opts.threshold;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  cfg.validate();
  return cfg;
}

std::string prepare_out_dir(const RunConfig& cfg) {
  const std::string dir = resolve_output_dir(cfg);
  fs::create_directories(dir);
  std::ofstream echo(dir + "/config.json", std::ios::trunc);
  echo << run_config_json(cfg) << '\n';
  if (!echo) {
    throw DataError("cannot write " + dir + "/config.json");
  }
  return dir;
}

std::map<std::string, std::uint64_t> digest_map(const PreparedData& data) {
  std::map<std::string, std::uint64_t> out;
  for (std::size_t k = 0; k < data.owners.size(); ++k) {
    out["owner_" + std::to_string(k)] = dataset_digest(*data.owners[k]);
  }
  out["test"] = dataset_digest(*data.test);
  return out;
}

nlohmann::json metric_to_json(const MetricReport& r) {
  return {{"mae", r.mae},           {"f1", r.f1},
          {"precision", r.precision}, {"recall", r.recall},
          {"tp", r.counts.tp},      {"tn", r.counts.tn},
          {"fp", r.counts.fp},      {"fn", r.counts.fn},
          {"n_points", r.n_points}, {"f1_degenerate", r.f1_degenerate}};
}

void save_final_model(const ArchitectureSpec& spec, const ParameterVector& params,
                      const std::string& dir) {
  fs::create_directories(dir + "/checkpoints");
  save_model(spec, params, dir + "/checkpoints/final");
}

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 >= text.size()) {
    throw ConfigError("expected HOST:PORT, got '" + text + "'");
  }
  const std::string host = text.substr(0, colon);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) {
    throw ConfigError("port out of range in '" + text + "'");
  }
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

int cmd_synth(const CommonOpts& opts) {
  const auto cfg = resolve_config(opts);
  if (cfg.source != DataSource::synthetic) {
    throw ConfigError("synth needs a synthetic data source");
  }
  const auto dir = prepare_out_dir(cfg);
  const auto data = prepare_datasets(cfg);
  save_prepared(data, dir + "/data");
  std::cout << "wrote " << data.owners.size() << " owner datasets ("
            << data.owners.front()->count << " windows each) and a test set of "
            << data.test->count << " windows to " << dir << "/data\n";
  if (data.leftover_windows > 0) {
    std::cout << "leftover windows unused: " << data.leftover_windows << "\n";
  }
  return 0;
}

int cmd_ingest(const CommonOpts& opts) {
  const auto cfg = resolve_config(opts);
  if (cfg.source != DataSource::csv) {
    throw ConfigError("ingest needs a csv data source");
  }
  const auto dir = prepare_out_dir(cfg);
  const auto data = prepare_datasets(cfg);
  save_prepared(data, dir + "/data");
  std::cout << "ingested " << cfg.csv.path << ": " << data.owners.size()
            << " owners x " << data.owners.front()->count << " windows, test "
            << data.test->count << " windows\n";
  if (data.truncated) {
    std::cout << "warning: series truncated at a gap longer than "
              << cfg.csv.max_gap_s << " s; dropped " << data.dropped_samples
              << " grid samples\n";
  }
  return 0;
}

int cmd_train_federated(const CommonOpts& opts, bool distributed,
                        const std::string& bind) {
  const auto cfg = resolve_config(opts);
  const auto spec = cfg.resolve_architecture();
  const auto dir = prepare_out_dir(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  if (distributed) {
    // coordinator only: no dataset is loaded in this process
    const auto [host, port] = parse_host_port(bind);
    netproto::ServeOptions so;
    so.bind_host = host;
    so.port = port;
    so.spec = spec;
    so.cfg = cfg.federation();
    ManifestWriter writer(dir + "/manifest.jsonl", "federated", cfg, {});
    so.on_listening = [](std::uint16_t p) {
      std::cout << "coordinator listening on port " << p << std::endl;
    };
    so.on_round = [&writer](const RoundRecord& r) { writer.round(r); };
    const auto result = netproto::serve(so);
    save_final_model(spec, result.final_params, dir);
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    writer.final_result(params_digest(result.final_params), std::nullopt, wall);
    std::cout << "federated run complete: " << result.records.size()
              << " rounds, final digest " << params_digest(result.final_params)
              << "\n";
    return 0;
  }

  const auto data = prepare_datasets(cfg);
  auto clients = make_clients(spec, cfg.federation(), data.owners);
  ManifestWriter writer(dir + "/manifest.jsonl", "federated", cfg, digest_map(data));
  const auto result =
      run_federation(spec, cfg.federation(), clients, data.test.get(),
                     [&writer](const RoundRecord& r) { writer.round(r); });
  save_final_model(spec, result.final_params, dir);
  const auto report = evaluate_model(spec, result.final_params, *data.test,
                                     cfg.threshold_watts, cfg.mode);
  const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  writer.final_result(params_digest(result.final_params), report, wall);
  std::cout << "federated run complete: " << result.records.size()
            << " rounds, test MAE " << report.mae << " W, F1 " << report.f1
            << ", final digest " << params_digest(result.final_params) << "\n";
  return 0;
}

int cmd_train_central(const CommonOpts& opts) {
  const auto cfg = resolve_config(opts);
  const auto spec = cfg.resolve_architecture();
  const auto dir = prepare_out_dir(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  const auto data = prepare_datasets(cfg);
  const auto full = concat_owners(data);
  ManifestWriter writer(dir + "/manifest.jsonl", "central", cfg, digest_map(data));
  const auto result =
      train_central(spec, cfg.federation(), full, data.test.get(),
                    [&writer](const RoundRecord& r) { writer.round(r); });
  save_final_model(spec, result.final_params, dir);
  const auto report = evaluate_model(spec, result.final_params, *data.test,
                                     cfg.threshold_watts, cfg.mode);
  const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  writer.final_result(params_digest(result.final_params), report, wall);
  std::cout << "central run complete: " << cfg.rounds << "x" << cfg.local_epochs
            << " epochs over " << full.count << " windows, test MAE "
            << report.mae << " W, F1 " << report.f1 << "\n";
  return 0;
}

int cmd_train_local(const CommonOpts& opts) {
  const auto cfg = resolve_config(opts);
  const auto spec = cfg.resolve_architecture();
  const auto dir = prepare_out_dir(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  const auto data = prepare_datasets(cfg);
  ManifestWriter writer(dir + "/manifest.jsonl", "local", cfg, digest_map(data));
  const auto locals =
      train_local_baselines(spec, cfg.federation(), data.owners, *data.test);

  MetricReport avg;
  fs::create_directories(dir + "/checkpoints");
  for (const auto& l : locals) {
    writer.local_site(l.client_id, params_digest(l.final_params), l.report);
    save_model(spec, l.final_params,
               dir + "/checkpoints/local_" + std::to_string(l.client_id));
    avg.mae += l.report.mae;
    avg.f1 += l.report.f1;
    avg.precision += l.report.precision;
    avg.recall += l.report.recall;
    avg.counts.tp += l.report.counts.tp;
    avg.counts.tn += l.report.counts.tn;
    avg.counts.fp += l.report.counts.fp;
    avg.counts.fn += l.report.counts.fn;
    avg.n_points += l.report.n_points;
  }
  const auto k = static_cast<double>(locals.size());
  avg.mae /= k;
  avg.f1 /= k;
  avg.precision /= k;
  avg.recall /= k;
  const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  writer.final_result(0, avg, wall);
  std::cout << "local baselines complete: " << locals.size()
            << " owners, avg test MAE " << avg.mae << " W, avg F1 " << avg.f1
            << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& model_stem,
                 const std::string& data_path) {
  const auto cfg = resolve_config(opts);
  const auto [spec, params] = load_model(model_stem);
  const auto test = load_dataset(data_path);
  const auto report =
      evaluate_model(spec, params, test, cfg.threshold_watts, spec.head_mode);
  std::cout << metric_to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& manifest_paths,
                const std::string& csv_out) {
  const Manifest* fed = nullptr;
  const Manifest* central = nullptr;
  const Manifest* local = nullptr;
  std::vector<Manifest> manifests;
  manifests.reserve(manifest_paths.size());
  for (const auto& path : manifest_paths) {
    manifests.push_back(read_manifest(path));
  }
  for (const auto& m : manifests) {
    if (m.run_kind == "federated" && fed == nullptr) fed = &m;
    else if (m.run_kind == "central" && central == nullptr) central = &m;
    else if (m.run_kind == "local" && local == nullptr) local = &m;
    else throw DataError("compare: duplicate or unknown run kind '" + m.run_kind + "'");
  }
  if (fed == nullptr || central == nullptr || local == nullptr) {
    throw DataError("compare needs one federated, one central and one local manifest");
  }
  if (!fed->final_metrics.has_value() || !central->final_metrics.has_value()) {
    throw DataError("compare: fed/central manifests carry no final metrics");
  }
  if (local->local_sites.empty()) {
    throw DataError("compare: local manifest has no per-site reports");
  }

  double avg_mae_loc = 0.0, avg_f_loc = 0.0;
  for (const auto& s : local->local_sites) {
    avg_mae_loc += s.report.mae;
    avg_f_loc += s.report.f1;
  }
  avg_mae_loc /= static_cast<double>(local->local_sites.size());
  avg_f_loc /= static_cast<double>(local->local_sites.size());

  const auto report = compare_models(avg_mae_loc, avg_f_loc,
                                     central->final_metrics->mae,
                                     central->final_metrics->f1,
                                     fed->final_metrics->mae,
                                     fed->final_metrics->f1);

  nlohmann::json j = {
      {"appliance", fed->appliance},
      {"clients", fed->clients},
      {"avg_mae_loc", report.avg_mae_loc},
      {"avg_f_loc", report.avg_f_loc},
      {"mae_cent", report.mae_cent},
      {"f_cent", report.f_cent},
      {"mae_fed", report.mae_fed},
      {"f_fed", report.f_fed},
      {"imp_mae_pct", report.imp_mae_pct},
      {"imp_f_pct", report.imp_f_pct},
      {"gap_mae_pct", report.gap_mae_pct},
      {"gap_f_pct", report.gap_f_pct},
  };
  std::cout << j.dump(2) << "\n";

  if (!csv_out.empty()) {
    std::ofstream csv(csv_out, std::ios::trunc);
    if (!csv) {
      throw DataError("cannot write " + csv_out);
    }
    csv << "appliance,k,avg_mae_loc,avg_f_loc,mae_cent,f_cent,mae_fed,f_fed,"
           "imp_mae_pct,imp_f_pct,gap_mae_pct,gap_f_pct\n";
    char line[512];
    std::snprintf(line, sizeof line,
                  "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  fed->appliance.c_str(), fed->clients, report.avg_mae_loc,
                  report.avg_f_loc, report.mae_cent, report.f_cent,
                  report.mae_fed, report.f_fed, report.imp_mae_pct,
                  report.imp_f_pct, report.gap_mae_pct, report.gap_f_pct);
    csv << line;
  }
  return 0;
}

int cmd_export_plot(const std::string& manifest_path, const std::string& csv_out) {
  const auto m = read_manifest(manifest_path);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!csv_out.empty()) {
    const auto parent = fs::path(csv_out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    file.open(csv_out, std::ios::trunc);
    if (!file) {
      throw DataError("cannot write " + csv_out);
    }
    out = &file;
  }
  *out << "round,lr,loss,mae,f1\n";
  for (const auto& r : m.rounds) {
    char line[256];
    if (r.eval.has_value()) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", r.round,
                    r.lr, r.mean_loss, r.eval->mae, r.eval->f1);
    } else {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,,\n", r.round, r.lr,
                    r.mean_loss);
    }
    *out << line;
  }
  return 0;
}

int cmd_serve(const CommonOpts& opts, const std::string& bind) {
  return cmd_train_federated(opts, /*distributed=*/true, bind);
}

int cmd_client(const CommonOpts& opts, const std::string& connect, int client_id,
               const std::string& data_path) {
  const auto cfg = resolve_config(opts);
  const auto [host, port] = parse_host_port(connect);
  netproto::ClientOptions co;
  co.host = host;
  co.port = port;
  co.client_id = client_id;
  co.dataset = std::make_shared<WindowedDataset>(load_dataset(data_path));
  co.spec = cfg.resolve_architecture();
  co.cfg = cfg.federation();
  const auto result = netproto::client_run(co);
  std::cout << "client " << client_id << " trained " << result.rounds_trained
            << " rounds, shutdown reason " << static_cast<int>(result.reason)
            << "\n";
  if (result.reason != netproto::ShutdownReason::finished) {
    throw TrainingError("coordinator ended the session early (reason " +
                        std::to_string(static_cast<int>(result.reason)) + ")");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fednilm: federated seq2point load disaggregation"};
  app.require_subcommand(1);

  CommonOpts synth_opts;
  auto* synth = app.add_subcommand("synth", "generate synthetic owner datasets");
  add_common(synth, synth_opts);

  CommonOpts ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "ingest a CSV into cached datasets");
  add_common(ingest, ingest_opts);

  CommonOpts fed_opts;
  bool distributed = false;
  std::string fed_bind = "127.0.0.1:7600";
  auto* fed = app.add_subcommand("train-federated", "run the federation");
  add_common(fed, fed_opts);
  fed->add_flag("--distributed", distributed,
                "run as the network coordinator instead of in-process");
  fed->add_option("--bind", fed_bind, "coordinator bind address (with --distributed)");

  CommonOpts central_opts;
  auto* central = app.add_subcommand("train-central", "centralized baseline");
  add_common(central, central_opts);

  CommonOpts local_opts;
  auto* local = app.add_subcommand("train-local", "per-owner local baselines");
  add_common(local, local_opts);

  CommonOpts eval_opts;
  std::string eval_model, eval_data;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--model", eval_model, "checkpoint stem (without extension)")
      ->required();
  evaluate->add_option("--data", eval_data, "dataset file (.fnlmds)")->required();

  std::vector<std::string> compare_manifests;
  std::string compare_csv;
  auto* compare = app.add_subcommand("compare", "three-way model comparison");
  compare->add_option("manifests", compare_manifests,
                      "federated, central and local manifest files")
      ->expected(3);
  compare->add_option("--csv", compare_csv, "also write a CSV row");

  std::string plot_manifest, plot_csv;
  auto* plot = app.add_subcommand("export-plot", "round/loss/mae/f1 curve data");
  plot->add_option("--manifest", plot_manifest, "manifest file")->required();
  plot->add_option("--csv", plot_csv, "output CSV (default stdout)");

  CommonOpts serve_opts;
  std::string serve_bind = "127.0.0.1:7600";
  auto* serve_cmd = app.add_subcommand("serve", "run the federation coordinator");
  add_common(serve_cmd, serve_opts);
  serve_cmd->add_option("--bind", serve_bind, "bind address HOST:PORT");

  CommonOpts client_opts;
  std::string client_connect = "127.0.0.1:7600";
  int client_id = 0;
  std::string client_data;
  auto* client_cmd = app.add_subcommand("client", "run a local data owner worker");
  add_common(client_cmd, client_opts);
  client_cmd->add_option("--connect", client_connect, "coordinator HOST:PORT");
  client_cmd->add_option("--client-id", client_id, "unique owner id")->required();
  client_cmd->add_option("--data", client_data, "owner dataset (.fnlmds)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_opts);
    if (ingest->parsed()) return cmd_ingest(ingest_opts);
    if (fed->parsed()) return cmd_train_federated(fed_opts, distributed, fed_bind);
    if (central->parsed()) return cmd_train_central(central_opts);
    if (local->parsed()) return cmd_train_local(local_opts);
    if (evaluate->parsed()) return cmd_evaluate(eval_opts, eval_model, eval_data);
    if (compare->parsed()) return cmd_compare(compare_manifests, compare_csv);
    if (plot->parsed()) return cmd_export_plot(plot_manifest, plot_csv);
    if (serve_cmd->parsed()) return cmd_serve(serve_opts, serve_bind);
    if (client_cmd->parsed()) {
      return cmd_client(client_opts, client_connect, client_id, client_data);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
