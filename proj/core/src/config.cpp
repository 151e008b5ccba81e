#include "fednilm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fednilm {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed) {
  if (!obj.is_object()) {
    throw ConfigError(where + ": expected a JSON object");
  }
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

HeadMode mode_from(const std::string& s) {
  if (s == "regression") return HeadMode::regression;
  if (s == "classification") return HeadMode::classification;
  throw ConfigError("mode must be 'regression' or 'classification', got '" + s + "'");
}

const char* mode_name(HeadMode m) {
  return m == HeadMode::regression ? "regression" : "classification";
}

OptimizerKind optimizer_from(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("optimizer.kind must be 'sgd' or 'adam', got '" + s + "'");
}

std::vector<Layer> parse_layers(const json& arr) {
  if (!arr.is_array()) {
    throw ConfigError("architecture.layers: expected an array");
  }
  std::vector<Layer> layers;
  for (const auto& lj : arr) {
    require_keys(lj, "architecture layer",
                 {"type", "in_channels", "out_channels", "kernel_len", "stride",
                  "activation", "in_dim", "out_dim"});
    const std::string type = lj.at("type").get<std::string>();
    auto act_of = [&](const std::string& s) {
      if (s == "linear") return Activation::linear;
      if (s == "relu") return Activation::relu;
      if (s == "sigmoid") return Activation::sigmoid;
      throw ConfigError("unknown activation: " + s);
    };
    if (type == "conv1d") {
      Conv1dLayer c;
      c.in_channels = lj.at("in_channels").get<int>();
      c.out_channels = lj.at("out_channels").get<int>();
      c.kernel_len = lj.at("kernel_len").get<int>();
      c.stride = lj.value("stride", 1);
      c.activation = act_of(lj.value("activation", std::string("relu")));
      layers.emplace_back(c);
    } else if (type == "dense") {
      DenseLayer d;
      d.in_dim = lj.at("in_dim").get<int>();
      d.out_dim = lj.at("out_dim").get<int>();
      d.activation = act_of(lj.value("activation", std::string("linear")));
      layers.emplace_back(d);
    } else {
      throw ConfigError("unknown layer type: " + type);
    }
  }
  return layers;
}

json layers_json(const std::vector<Layer>& layers) {
  json arr = json::array();
  for (const auto& layer : layers) {
    json lj;
    auto act_name = [](Activation a) {
      switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
      }
      return "linear";
    };
    if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      lj["type"] = "conv1d";
      lj["in_channels"] = conv->in_channels;
      lj["out_channels"] = conv->out_channels;
      lj["kernel_len"] = conv->kernel_len;
      lj["stride"] = conv->stride;
      lj["activation"] = act_name(conv->activation);
    } else {
      const auto& dense = std::get<DenseLayer>(layer);
      lj["type"] = "dense";
      lj["in_dim"] = dense.in_dim;
      lj["out_dim"] = dense.out_dim;
      lj["activation"] = act_name(dense.activation);
    }
    arr.push_back(lj);
  }
  return arr;
}

}  // namespace

ArchitectureSpec RunConfig::resolve_architecture() const {
  if (architecture.empty()) {
    return default_architecture(window_len, mode);
  }
  ArchitectureSpec spec;
  spec.window_len = window_len;
  spec.head_mode = mode;
  spec.layers = architecture;
  fednilm::validate(spec);
  return spec;
}

FederationConfig RunConfig::federation() const {
  FederationConfig f;
  f.client_count = clients;
  f.rounds = rounds;
  f.local_epochs = local_epochs;
  f.batch_size = batch_size;
  f.seed = seed;
  f.optimizer = optimizer;
  f.hyper = hyper;
  f.eval_every = eval_every;
  f.reset_optimizer_each_round = reset_optimizer_each_round;
  f.threshold_watts = threshold_watts;
  return f;
}

void RunConfig::validate() const {
  federation().validate();
  if (window_len < 1 || window_len % 2 == 0) {
    throw ConfigError("window_len must be odd and positive");
  }
  if (!(threshold_watts > 0.0)) {
    throw ConfigError("threshold_watts must be positive");
  }
  if (appliance.empty()) {
    throw ConfigError("appliance name must be set");
  }
  if (source == DataSource::csv && csv.path.empty()) {
    throw ConfigError("data.csv.path must be set for a csv source");
  }
  if (source == DataSource::csv && csv.appliance_col.empty()) {
    throw ConfigError("data.csv.appliance_col must be set for a csv source");
  }
  if (source == DataSource::cached && cached_dir.empty()) {
    throw ConfigError("data.cached.dir must be set for a cached source");
  }
  if (source == DataSource::synthetic && synthetic.appliances.empty()) {
    throw ConfigError("data.synthetic.appliances must not be empty");
  }
  resolve_architecture();
}

std::optional<double> default_threshold(const std::string& appliance) {
  // Power-on thresholds in watts, residential and industrial.
  static const std::vector<std::pair<std::string, double>> table = {
      {"microwave", 200.0},      {"washing_machine", 5.0},
      {"kettle", 1400.0},        {"dishwasher", 10.0},
      {"tumble_dryer", 130.0},   {"television", 10.0},
      {"pelletizer", 500.0},     {"double_pole_contactor", 100.0},
      {"exhaust_fan", 1000.0},   {"milling_machine", 5000.0},
  };
  for (const auto& [name, watts] : table) {
    if (name == appliance) return watts;
  }
  return std::nullopt;
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  cfg.scenario = name;
  if (name == "residential") {
    cfg.window_len = 599;
    cfg.clients = 4;
    cfg.rounds = 100;
    cfg.local_epochs = 10;
    cfg.batch_size = 512;
    cfg.appliance = "kettle";
    cfg.threshold_watts = *default_threshold("kettle");
    cfg.source = DataSource::csv;
    cfg.csv.period_s = 8.0;
    cfg.samples_per_owner = 162000;
    cfg.test_samples = 1296000;
    cfg.output_dir = "runs/residential";
    return cfg;
  }
  if (name == "industrial") {
    cfg.window_len = 599;
    cfg.clients = 8;
    cfg.rounds = 100;
    cfg.local_epochs = 10;
    cfg.batch_size = 512;
    cfg.appliance = "pelletizer";
    cfg.threshold_watts = *default_threshold("pelletizer");
    cfg.source = DataSource::csv;
    cfg.csv.period_s = 16.0;
    cfg.samples_per_owner = 5400;
    cfg.test_samples = 43200;
    cfg.output_dir = "runs/industrial";
    return cfg;
  }
  if (name == "synthetic-small") {
    // Desk-scale preset: minutes on a laptop CPU, used by CI.
    cfg.window_len = 31;
    cfg.clients = 4;
    cfg.rounds = 20;
    cfg.local_epochs = 2;
    cfg.batch_size = 64;
    cfg.eval_every = 5;
    cfg.appliance = "heater_a";
    cfg.threshold_watts = 150.0;
    cfg.samples_per_owner = 4000;
    cfg.test_samples = 4000;
    cfg.seed = 1;
    cfg.hyper.lr0 = 3e-3;
    cfg.source = DataSource::synthetic;
    // Two appliances at the same power level with coprime cycles: the
    // mapping has an irreducible ambiguity floor, so every trainer
    // plateaus at a comparable MAE instead of racing to memorize.
    cfg.synthetic.n_samples = 21000;
    cfg.synthetic.period_s = 8.0;
    cfg.synthetic.noise_std = 40.0;
    cfg.synthetic.seed = 1;
    cfg.synthetic.appliances = {
        {"heater_a", 300.0, 0.3, 50},
        {"heater_b", 300.0, 0.4, 73},
    };
    cfg.architecture = {
        Conv1dLayer{1, 8, 5, 1, Activation::relu},
        Conv1dLayer{8, 8, 3, 1, Activation::relu},
        DenseLayer{200, 32, Activation::relu},
        DenseLayer{32, 1, Activation::linear},
    };
    cfg.output_dir = "runs/synthetic-small";
    return cfg;
  }
  throw ConfigError("unknown preset '" + name + "' (have: residential, industrial, synthetic-small)");
}

std::vector<std::string> preset_names() {
  return {"residential", "industrial", "synthetic-small"};
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  require_keys(j, "config",
               {"preset", "scenario", "mode", "seed", "window_len", "appliance",
                "threshold_watts", "clients", "rounds", "local_epochs",
                "batch_size", "eval_every", "samples_per_owner", "test_samples",
                "output_dir", "optimizer", "data", "architecture"});

  RunConfig cfg;
  if (j.contains("preset")) {
    cfg = preset(j.at("preset").get<std::string>());
  }
  maybe(j, "scenario", cfg.scenario);
  if (j.contains("mode")) cfg.mode = mode_from(j.at("mode").get<std::string>());
  maybe(j, "seed", cfg.seed);
  maybe(j, "window_len", cfg.window_len);
  maybe(j, "appliance", cfg.appliance);
  maybe(j, "threshold_watts", cfg.threshold_watts);
  maybe(j, "clients", cfg.clients);
  maybe(j, "rounds", cfg.rounds);
  maybe(j, "local_epochs", cfg.local_epochs);
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "eval_every", cfg.eval_every);
  maybe(j, "samples_per_owner", cfg.samples_per_owner);
  maybe(j, "test_samples", cfg.test_samples);
  maybe(j, "output_dir", cfg.output_dir);

  if (j.contains("optimizer")) {
    const auto& oj = j.at("optimizer");
    require_keys(oj, "optimizer",
                 {"kind", "lr0", "beta1", "beta2", "eps_stab", "decay_gamma",
                  "reset_each_round"});
    if (oj.contains("kind")) {
      cfg.optimizer = optimizer_from(oj.at("kind").get<std::string>());
    }
    maybe(oj, "lr0", cfg.hyper.lr0);
    maybe(oj, "beta1", cfg.hyper.beta1);
    maybe(oj, "beta2", cfg.hyper.beta2);
    maybe(oj, "eps_stab", cfg.hyper.eps_stab);
    maybe(oj, "decay_gamma", cfg.hyper.decay_gamma);
    maybe(oj, "reset_each_round", cfg.reset_optimizer_each_round);
  }

  if (j.contains("data")) {
    const auto& dj = j.at("data");
    require_keys(dj, "data", {"source", "synthetic", "csv", "cached"});
    const std::string source = dj.value("source", std::string("synthetic"));
    if (source == "synthetic") cfg.source = DataSource::synthetic;
    else if (source == "csv") cfg.source = DataSource::csv;
    else if (source == "cached") cfg.source = DataSource::cached;
    else throw ConfigError("data.source must be synthetic, csv or cached");

    if (dj.contains("synthetic")) {
      const auto& sj = dj.at("synthetic");
      require_keys(sj, "data.synthetic",
                   {"n_samples", "period_s", "noise_std", "seed", "appliances"});
      maybe(sj, "n_samples", cfg.synthetic.n_samples);
      maybe(sj, "period_s", cfg.synthetic.period_s);
      maybe(sj, "noise_std", cfg.synthetic.noise_std);
      maybe(sj, "seed", cfg.synthetic.seed);
      if (sj.contains("appliances")) {
        cfg.synthetic.appliances.clear();
        for (const auto& aj : sj.at("appliances")) {
          require_keys(aj, "synthetic appliance",
                       {"name", "on_power", "duty_cycle", "cycle_len"});
          SynthAppliance a;
          a.name = aj.at("name").get<std::string>();
          a.on_power = aj.at("on_power").get<double>();
          a.duty_cycle = aj.at("duty_cycle").get<double>();
          a.cycle_len = aj.at("cycle_len").get<int>();
          cfg.synthetic.appliances.push_back(std::move(a));
        }
      }
    }
    if (dj.contains("csv")) {
      const auto& cj = dj.at("csv");
      require_keys(cj, "data.csv",
                   {"path", "timestamp_col", "aggregate_col", "appliance_col",
                    "max_gap_s", "period_s"});
      maybe(cj, "path", cfg.csv.path);
      maybe(cj, "timestamp_col", cfg.csv.timestamp_col);
      maybe(cj, "aggregate_col", cfg.csv.aggregate_col);
      maybe(cj, "appliance_col", cfg.csv.appliance_col);
      maybe(cj, "max_gap_s", cfg.csv.max_gap_s);
      maybe(cj, "period_s", cfg.csv.period_s);
    }
    if (dj.contains("cached")) {
      const auto& cj = dj.at("cached");
      require_keys(cj, "data.cached", {"dir"});
      maybe(cj, "dir", cfg.cached_dir);
    }
  }

  if (j.contains("architecture")) {
    const auto& aj = j.at("architecture");
    require_keys(aj, "architecture", {"layers"});
    cfg.architecture = parse_layers(aj.at("layers"));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["scenario"] = cfg.scenario;
  j["mode"] = mode_name(cfg.mode);
  j["seed"] = cfg.seed;
  j["window_len"] = cfg.window_len;
  j["appliance"] = cfg.appliance;
  j["threshold_watts"] = cfg.threshold_watts;
  j["clients"] = cfg.clients;
  j["rounds"] = cfg.rounds;
  j["local_epochs"] = cfg.local_epochs;
  j["batch_size"] = cfg.batch_size;
  j["eval_every"] = cfg.eval_every;
  j["samples_per_owner"] = cfg.samples_per_owner;
  j["test_samples"] = cfg.test_samples;
  j["output_dir"] = cfg.output_dir;
  json oj;
  oj["kind"] = cfg.optimizer == OptimizerKind::adam ? "adam" : "sgd";
  oj["lr0"] = cfg.hyper.lr0;
  oj["beta1"] = cfg.hyper.beta1;
  oj["beta2"] = cfg.hyper.beta2;
  oj["eps_stab"] = cfg.hyper.eps_stab;
  oj["decay_gamma"] = cfg.hyper.decay_gamma;
  oj["reset_each_round"] = cfg.reset_optimizer_each_round;
  j["optimizer"] = oj;
  json dj;
  switch (cfg.source) {
    case DataSource::synthetic: {
      dj["source"] = "synthetic";
      json sj;
      sj["n_samples"] = cfg.synthetic.n_samples;
      sj["period_s"] = cfg.synthetic.period_s;
      sj["noise_std"] = cfg.synthetic.noise_std;
      sj["seed"] = cfg.synthetic.seed;
      json apps = json::array();
      for (const auto& a : cfg.synthetic.appliances) {
        apps.push_back({{"name", a.name},
                        {"on_power", a.on_power},
                        {"duty_cycle", a.duty_cycle},
                        {"cycle_len", a.cycle_len}});
      }
      sj["appliances"] = apps;
      dj["synthetic"] = sj;
      break;
    }
    case DataSource::csv: {
      dj["source"] = "csv";
      dj["csv"] = {{"path", cfg.csv.path},
                   {"timestamp_col", cfg.csv.timestamp_col},
                   {"aggregate_col", cfg.csv.aggregate_col},
                   {"appliance_col", cfg.csv.appliance_col},
                   {"max_gap_s", cfg.csv.max_gap_s},
                   {"period_s", cfg.csv.period_s}};
      break;
    }
    case DataSource::cached: {
      dj["source"] = "cached";
      dj["cached"] = {{"dir", cfg.cached_dir}};
      break;
    }
  }
  j["data"] = dj;
  if (!cfg.architecture.empty()) {
    j["architecture"] = {{"layers", layers_json(cfg.architecture)}};
  }
  return j.dump(2);
}

std::string resolve_output_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("FEDNILM_OUT_DIR"); env != nullptr && *env) {
    return env;
  }
  return cfg.output_dir;
}

}  // namespace fednilm
