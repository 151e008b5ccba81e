#include "fednilm/pipeline.hpp"

#include <filesystem>

namespace fednilm {

namespace {

PreparedData split_windows(const RunConfig& cfg, const LoadSeries& total,
                           const LoadSeries& appliance) {
  const std::size_t w = static_cast<std::size_t>(cfg.window_len);
  if (total.values.size() < w) {
    throw DataError("prepared series shorter than one window");
  }
  const std::size_t n_windows = total.values.size() - w + 1;
  std::size_t per_owner = cfg.samples_per_owner;
  std::size_t test_count = cfg.test_samples;
  const std::size_t k = static_cast<std::size_t>(cfg.clients);
  if (per_owner == 0) {
    // Fill: reserve the test span, split the rest evenly.
    if (test_count == 0) test_count = n_windows / 5;
    if (n_windows <= test_count) {
      throw DataError("not enough windows for the requested test span");
    }
    per_owner = (n_windows - test_count) / k;
    if (per_owner == 0) {
      throw DataError("not enough windows to give every owner data");
    }
  }
  if (test_count == 0) {
    if (k * per_owner >= n_windows) {
      throw DataError("no windows left for the test span");
    }
    test_count = n_windows - k * per_owner;
  }
  if (k * per_owner + test_count > n_windows) {
    throw DataError("dataset too small: need " +
                    std::to_string(k * per_owner + test_count) + " windows (" +
                    std::to_string(k) + " owners x " + std::to_string(per_owner) +
                    " + " + std::to_string(test_count) + " test), have " +
                    std::to_string(n_windows));
  }

  // Stats come from the training span only.
  const std::size_t train_samples = k * per_owner + w - 1;
  const std::vector<float> train_total(total.values.begin(),
                                       total.values.begin() + train_samples);
  const std::vector<float> train_app(appliance.values.begin(),
                                     appliance.values.begin() + train_samples);
  const auto input_stats = normalize_fit(train_total);
  const auto target_stats = normalize_fit(train_app);

  const ApplianceThreshold threshold{cfg.appliance, cfg.threshold_watts};
  const auto all = make_windows(total, appliance, cfg.window_len, threshold,
                                input_stats, target_stats);
  auto partition = partition_owners(slice_windows(all, 0, k * per_owner),
                                    cfg.clients, per_owner);

  PreparedData out;
  out.owners.reserve(partition.owners.size());
  for (auto& owner : partition.owners) {
    out.owners.push_back(std::make_shared<WindowedDataset>(std::move(owner)));
  }
  out.test = std::make_shared<WindowedDataset>(
      slice_windows(all, all.count - test_count, test_count));
  out.leftover_windows = all.count - k * per_owner - test_count;
  return out;
}

const LoadSeries* find_appliance(const std::vector<LoadSeries>& series,
                                 const std::string& name) {
  for (const auto& s : series) {
    if (s.kind == SeriesKind::appliance && s.appliance_name == name) return &s;
  }
  return nullptr;
}

}  // namespace

PreparedData prepare_datasets(const RunConfig& cfg) {
  cfg.validate();
  switch (cfg.source) {
    case DataSource::synthetic: {
      const auto synth = synth_generate(cfg.synthetic);
      const auto* appliance = find_appliance(synth.appliances, cfg.appliance);
      if (appliance == nullptr) {
        throw ConfigError("appliance '" + cfg.appliance +
                          "' is not produced by the synthetic generator");
      }
      return split_windows(cfg, synth.total, *appliance);
    }
    case DataSource::csv: {
      CsvSchema schema;
      schema.timestamp_col = cfg.csv.timestamp_col;
      schema.aggregate_col = cfg.csv.aggregate_col;
      schema.appliances[cfg.csv.appliance_col] = cfg.appliance;
      schema.period_s = cfg.csv.period_s;
      const auto series = ingest_csv(cfg.csv.path, schema);
      const auto* appliance = find_appliance(series, cfg.appliance);
      if (appliance == nullptr || series.empty()) {
        throw DataError("csv did not yield the requested appliance series");
      }
      auto aligned = align_and_resample(series.front(), *appliance,
                                        cfg.csv.period_s, cfg.csv.max_gap_s);
      auto out = split_windows(cfg, aligned.total, aligned.appliance);
      out.truncated = aligned.truncated;
      out.dropped_samples = aligned.dropped_samples;
      return out;
    }
    case DataSource::cached:
      return load_prepared(cfg.cached_dir, cfg.clients);
  }
  throw ConfigError("unreachable data source");
}

void save_prepared(const PreparedData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < data.owners.size(); ++k) {
    save_dataset(*data.owners[k], dir + "/owner_" + std::to_string(k) + ".fnlmds");
  }
  save_dataset(*data.test, dir + "/test.fnlmds");
}

PreparedData load_prepared(const std::string& dir, int owner_count) {
  PreparedData out;
  for (int k = 0; k < owner_count; ++k) {
    const std::string path = dir + "/owner_" + std::to_string(k) + ".fnlmds";
    out.owners.push_back(std::make_shared<WindowedDataset>(load_dataset(path)));
  }
  out.test = std::make_shared<WindowedDataset>(load_dataset(dir + "/test.fnlmds"));
  return out;
}

WindowedDataset concat_owners(const PreparedData& data) {
  if (data.owners.empty()) {
    throw DataError("concat_owners: no owner datasets");
  }
  WindowedDataset out = *data.owners.front();
  for (std::size_t k = 1; k < data.owners.size(); ++k) {
    const auto& d = *data.owners[k];
    if (d.window_len != out.window_len) {
      throw DataError("concat_owners: mixed window lengths");
    }
    out.count += d.count;
    out.inputs.insert(out.inputs.end(), d.inputs.begin(), d.inputs.end());
    out.target_power.insert(out.target_power.end(), d.target_power.begin(),
                            d.target_power.end());
    out.target_power_norm.insert(out.target_power_norm.end(),
                                 d.target_power_norm.begin(),
                                 d.target_power_norm.end());
    out.target_on.insert(out.target_on.end(), d.target_on.begin(),
                         d.target_on.end());
  }
  return out;
}

}  // namespace fednilm
