#include "fednilm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fednilm/hash.hpp"
#include "fednilm/rng.hpp"
#include "fednilm/wire.hpp"

namespace fednilm {

namespace {

constexpr char kDatasetMagic[9] = "FNLMDS01";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double sample_time(const LoadSeries& s, std::size_t i) {
  if (s.timestamps.empty()) {
    return static_cast<double>(s.start_epoch_s) + static_cast<double>(i) * s.period_s;
  }
  return static_cast<double>(s.timestamps[i]);
}

}  // namespace

std::vector<LoadSeries> ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open csv file: " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": empty file, expected a header row");
  }
  const auto header = split_csv_line(line);
  auto col_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ConfigError(path + ": column '" + name + "' not found in header");
  };

  const std::size_t ts_col = col_of(schema.timestamp_col);
  struct Selected {
    std::size_t col;
    SeriesKind kind;
    std::string name;  // appliance name for appliance columns
  };
  std::vector<Selected> selected;
  selected.push_back({col_of(schema.aggregate_col), SeriesKind::total, ""});
  for (const auto& [col_name, appliance_name] : schema.appliances) {
    selected.push_back({col_of(col_name), SeriesKind::appliance, appliance_name});
  }

  std::vector<std::int64_t> timestamps;
  std::vector<std::vector<float>> columns(selected.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    std::int64_t ts;
    try {
      std::size_t used = 0;
      ts = std::stoll(cells[ts_col], &used);
      if (used != cells[ts_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed timestamp '" + cells[ts_col] + "'");
    }
    if (!timestamps.empty() && ts <= timestamps.back()) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": non-monotonic timestamp " + std::to_string(ts));
    }
    timestamps.push_back(ts);
    for (std::size_t s = 0; s < selected.size(); ++s) {
      const std::string& cell = cells[selected[s].col];
      float v;
      try {
        std::size_t used = 0;
        v = std::stof(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-numeric power value '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": non-finite power value");
      }
      if (v < 0.0f) {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": negative power reading " + cell);
      }
      columns[s].push_back(v);
    }
  }
  if (timestamps.empty()) {
    throw DataError(path + ": no data rows");
  }

  std::vector<LoadSeries> out;
  out.reserve(selected.size());
  for (std::size_t s = 0; s < selected.size(); ++s) {
    LoadSeries series;
    series.meter_id = path;
    series.kind = selected[s].kind;
    series.appliance_name = selected[s].name;
    series.period_s = schema.period_s;
    series.start_epoch_s = timestamps.front();
    series.values = std::move(columns[s]);
    series.timestamps = timestamps;
    out.push_back(std::move(series));
  }
  return out;
}

AlignedPair align_and_resample(const LoadSeries& total, const LoadSeries& appliance,
                               double period_s, double max_gap_s) {
  if (total.values.empty() || appliance.values.empty()) {
    throw DataError("align: empty input series");
  }
  if (!(period_s > 0.0)) {
    throw ConfigError("align: period_s must be positive");
  }
  const double t0 = std::max(sample_time(total, 0), sample_time(appliance, 0));
  const double t_end = std::min(sample_time(total, total.values.size() - 1),
                                sample_time(appliance, appliance.values.size() - 1));
  if (t_end < t0) {
    throw DataError("align: series have no temporal overlap");
  }
  const std::size_t grid_len =
      static_cast<std::size_t>(std::floor((t_end - t0) / period_s)) + 1;

  struct Cursor {
    const LoadSeries* s;
    std::size_t j = 0;
  };
  Cursor cur_total{&total}, cur_app{&appliance};
  auto fill_at = [&](Cursor& c, double tick, float& value) -> bool {
    while (c.j + 1 < c.s->values.size() && sample_time(*c.s, c.j + 1) <= tick) {
      ++c.j;
    }
    const double age = tick - sample_time(*c.s, c.j);
    if (age < 0.0 || age > max_gap_s) return false;
    value = c.s->values[c.j];
    return true;
  };

  AlignedPair out;
  out.total = total;
  out.appliance = appliance;
  out.total.values.clear();
  out.appliance.values.clear();
  out.total.timestamps.clear();
  out.appliance.timestamps.clear();
  out.total.period_s = period_s;
  out.appliance.period_s = period_s;
  out.total.start_epoch_s = static_cast<std::int64_t>(std::llround(t0));
  out.appliance.start_epoch_s = out.total.start_epoch_s;

  for (std::size_t i = 0; i < grid_len; ++i) {
    const double tick = t0 + static_cast<double>(i) * period_s;
    float vt = 0.0f, va = 0.0f;
    if (!fill_at(cur_total, tick, vt) || !fill_at(cur_app, tick, va)) {
      out.truncated = true;
      out.dropped_samples = grid_len - i;
      break;
    }
    out.total.values.push_back(vt);
    out.appliance.values.push_back(va);
  }
  if (out.total.values.empty()) {
    throw DataError("align: nothing left after gap truncation");
  }
  return out;
}

NormalizationStats normalize_fit(const std::vector<float>& values) {
  if (values.empty()) {
    throw DataError("normalize_fit: empty input");
  }
  double mean = 0.0;
  for (float v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (float v : values) {
    const double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(values.size());
  const double std_dev = std::sqrt(var);
  if (!(std_dev > 0.0)) {
    throw DataError("normalize_fit: constant series has no usable statistics");
  }
  return {mean, std_dev};
}

WindowedDataset make_windows(const LoadSeries& total, const LoadSeries& appliance,
                             int window_len, const ApplianceThreshold& threshold,
                             const NormalizationStats& input_stats,
                             const NormalizationStats& target_stats) {
  if (window_len < 1 || window_len % 2 == 0) {
    throw ConfigError("make_windows: window length must be odd and positive");
  }
  if (total.values.size() != appliance.values.size()) {
    throw DataError("make_windows: total/appliance length mismatch");
  }
  const std::size_t t_len = total.values.size();
  const std::size_t w = static_cast<std::size_t>(window_len);
  if (t_len < w) {
    throw DataError("make_windows: series shorter than one window");
  }
  if (!(threshold.watts > 0.0)) {
    throw ConfigError("make_windows: power-on threshold must be positive");
  }
  if (!(input_stats.std > 0.0) || !(target_stats.std > 0.0)) {
    throw DataError("make_windows: degenerate normalization stats");
  }

  WindowedDataset ds;
  ds.window_len = window_len;
  ds.count = t_len - w + 1;
  ds.stats = input_stats;
  ds.target_stats = target_stats;
  ds.inputs.resize(ds.count * w);
  ds.target_power.resize(ds.count);
  ds.target_power_norm.resize(ds.count);
  ds.target_on.resize(ds.count);

  const std::size_t mid = w / 2;
  const float in_mean = static_cast<float>(input_stats.mean);
  const float in_inv = static_cast<float>(1.0 / input_stats.std);
  const float tg_mean = static_cast<float>(target_stats.mean);
  const float tg_inv = static_cast<float>(1.0 / target_stats.std);
  for (std::size_t s = 0; s < ds.count; ++s) {
    float* row = ds.inputs.data() + s * w;
    for (std::size_t j = 0; j < w; ++j) {
      row[j] = (total.values[s + j] - in_mean) * in_inv;
    }
    const float tp = appliance.values[s + mid];
    ds.target_power[s] = tp;
    ds.target_power_norm[s] = (tp - tg_mean) * tg_inv;
    ds.target_on[s] = tp > threshold.watts ? 1 : 0;
  }
  return ds;
}

PartitionResult partition_owners(const WindowedDataset& ds, int owner_count,
                                 std::size_t samples_per_owner) {
  if (owner_count < 1 || samples_per_owner < 1) {
    throw ConfigError("partition_owners: owner count and block size must be positive");
  }
  const std::size_t needed =
      static_cast<std::size_t>(owner_count) * samples_per_owner;
  if (needed > ds.count) {
    throw DataError("partition_owners: need " + std::to_string(needed) +
                    " windows but the dataset has " + std::to_string(ds.count));
  }
  PartitionResult out;
  out.owners.reserve(static_cast<std::size_t>(owner_count));
  for (int k = 0; k < owner_count; ++k) {
    out.owners.push_back(
        slice_windows(ds, static_cast<std::size_t>(k) * samples_per_owner,
                      samples_per_owner));
  }
  out.leftover_windows = ds.count - needed;
  return out;
}

WindowedDataset slice_windows(const WindowedDataset& ds, std::size_t first,
                              std::size_t count) {
  if (first + count > ds.count) {
    throw DataError("slice_windows: range exceeds dataset");
  }
  WindowedDataset out;
  out.window_len = ds.window_len;
  out.count = count;
  out.stats = ds.stats;
  out.target_stats = ds.target_stats;
  const std::size_t w = static_cast<std::size_t>(ds.window_len);
  out.inputs.assign(ds.inputs.begin() + first * w,
                    ds.inputs.begin() + (first + count) * w);
  out.target_power.assign(ds.target_power.begin() + first,
                          ds.target_power.begin() + first + count);
  out.target_power_norm.assign(ds.target_power_norm.begin() + first,
                               ds.target_power_norm.begin() + first + count);
  out.target_on.assign(ds.target_on.begin() + first,
                       ds.target_on.begin() + first + count);
  return out;
}

SynthResult synth_generate(const SynthConfig& cfg) {
  if (cfg.n_samples == 0) {
    throw ConfigError("synth_generate: n_samples must be positive");
  }
  for (const auto& a : cfg.appliances) {
    if (!(a.duty_cycle > 0.0 && a.duty_cycle < 1.0)) {
      throw ConfigError("synth_generate: duty_cycle must be in (0,1) for " + a.name);
    }
    if (a.cycle_len < 2) {
      throw ConfigError("synth_generate: cycle_len must be >= 2 for " + a.name);
    }
    if (a.on_power < 0.0) {
      throw ConfigError("synth_generate: on_power must be non-negative for " + a.name);
    }
  }

  Rng rng(cfg.seed);
  SynthResult out;
  out.total.meter_id = "synthetic";
  out.total.kind = SeriesKind::total;
  out.total.period_s = cfg.period_s;
  out.total.start_epoch_s = 0;
  out.total.values.assign(cfg.n_samples, 0.0f);

  for (const auto& a : cfg.appliances) {
    LoadSeries s;
    s.meter_id = "synthetic";
    s.kind = SeriesKind::appliance;
    s.appliance_name = a.name;
    s.period_s = cfg.period_s;
    s.start_epoch_s = 0;
    s.values.resize(cfg.n_samples);
    const int phase = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(a.cycle_len)));
    const int on_len = std::clamp(
        static_cast<int>(std::lround(a.duty_cycle * a.cycle_len)), 1, a.cycle_len - 1);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
      const int pos = static_cast<int>((i + static_cast<std::size_t>(phase)) %
                                       static_cast<std::size_t>(a.cycle_len));
      const float v = pos < on_len ? static_cast<float>(a.on_power) : 0.0f;
      s.values[i] = v;
      out.total.values[i] += v;
    }
    out.appliances.push_back(std::move(s));
  }

  if (cfg.noise_std > 0.0) {
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
      out.total.values[i] +=
          static_cast<float>(std::fabs(rng.next_gauss()) * cfg.noise_std);
    }
  }
  return out;
}

namespace {

std::vector<std::uint8_t> encode_dataset(const WindowedDataset& ds) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + ds.inputs.size() * 4 + ds.count * 9 + 32);
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(kDatasetMagic[i]));
  wire::put_u64(bytes, static_cast<std::uint64_t>(ds.window_len));
  wire::put_u64(bytes, static_cast<std::uint64_t>(ds.count));
  for (float v : ds.inputs) wire::put_f32(bytes, v);
  for (float v : ds.target_power) wire::put_f32(bytes, v);
  for (float v : ds.target_power_norm) wire::put_f32(bytes, v);
  for (std::uint8_t v : ds.target_on) bytes.push_back(v);
  wire::put_f64(bytes, ds.stats.mean);
  wire::put_f64(bytes, ds.stats.std);
  wire::put_f64(bytes, ds.target_stats.mean);
  wire::put_f64(bytes, ds.target_stats.std);
  return bytes;
}

}  // namespace

void save_dataset(const WindowedDataset& ds, const std::string& path) {
  const auto bytes = encode_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write dataset file: " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("short write to dataset file: " + path);
  }
}

WindowedDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open dataset file: " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 24) {
    throw DataError(path + ": truncated dataset file");
  }
  if (std::memcmp(bytes.data(), kDatasetMagic, 8) != 0) {
    throw DataError(path + ": bad dataset magic");
  }
  std::size_t pos = 8;
  WindowedDataset ds;
  const std::uint64_t w = wire::get_u64(bytes, pos);
  const std::uint64_t n = wire::get_u64(bytes, pos);
  // reject header sizes the file could not possibly hold, in division form
  // so the check itself cannot wrap
  if (w == 0 || n == 0 || n > bytes.size() || w > (bytes.size() / 4) / n) {
    throw DataError(path + ": dataset header is inconsistent with the file size");
  }
  const std::size_t expected =
      24 + (w * n + 2 * n) * 4 + n /*target_on*/ + 32 /*stats*/;
  if (bytes.size() != expected) {
    throw DataError(path + ": dataset file size does not match its header");
  }
  ds.window_len = static_cast<int>(w);
  ds.count = static_cast<std::size_t>(n);
  ds.inputs.resize(w * n);
  for (auto& v : ds.inputs) v = wire::get_f32(bytes, pos);
  ds.target_power.resize(n);
  for (auto& v : ds.target_power) v = wire::get_f32(bytes, pos);
  ds.target_power_norm.resize(n);
  for (auto& v : ds.target_power_norm) v = wire::get_f32(bytes, pos);
  ds.target_on.resize(n);
  for (auto& v : ds.target_on) v = wire::get_u8(bytes, pos);
  ds.stats.mean = wire::get_f64(bytes, pos);
  ds.stats.std = wire::get_f64(bytes, pos);
  ds.target_stats.mean = wire::get_f64(bytes, pos);
  ds.target_stats.std = wire::get_f64(bytes, pos);
  return ds;
}

std::uint64_t dataset_digest(const WindowedDataset& ds) {
  const auto bytes = encode_dataset(ds);
  return fnv1a64(std::span<const std::uint8_t>(bytes));
}

}  // namespace fednilm
