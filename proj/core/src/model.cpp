#include "fednilm/model.hpp"

#include <json.hpp>

#include "fednilm/hash.hpp"

namespace fednilm {

namespace {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation activation_from(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + s);
}

const char* head_name(HeadMode h) {
  return h == HeadMode::regression ? "regression-linear" : "classification-sigmoid";
}

HeadMode head_from(const std::string& s) {
  if (s == "regression-linear") return HeadMode::regression;
  if (s == "classification-sigmoid") return HeadMode::classification;
  throw ConfigError("unknown head_mode: " + s);
}

}  // namespace

std::string canonical_json(const ArchitectureSpec& spec) {
  // Hand-built so the byte stream (and therefore the spec hash) never
  // depends on a JSON library's formatting choices.
  std::string s = "{\"window_len\":" + std::to_string(spec.window_len);
  s += ",\"head_mode\":\"";
  s += head_name(spec.head_mode);
  s += "\",\"layers\":[";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (i) s += ',';
    if (const auto* conv = std::get_if<Conv1dLayer>(&spec.layers[i])) {
      s += "{\"type\":\"conv1d\",\"in_channels\":" + std::to_string(conv->in_channels);
      s += ",\"out_channels\":" + std::to_string(conv->out_channels);
      s += ",\"kernel_len\":" + std::to_string(conv->kernel_len);
      s += ",\"stride\":" + std::to_string(conv->stride);
      s += ",\"activation\":\"";
      s += activation_name(conv->activation);
      s += "\"}";
    } else {
      const auto& dense = std::get<DenseLayer>(spec.layers[i]);
      s += "{\"type\":\"dense\",\"in_dim\":" + std::to_string(dense.in_dim);
      s += ",\"out_dim\":" + std::to_string(dense.out_dim);
      s += ",\"activation\":\"";
      s += activation_name(dense.activation);
      s += "\"}";
    }
  }
  s += "]}";
  return s;
}

ArchitectureSpec parse_architecture(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture json: ") + e.what());
  }
  ArchitectureSpec spec;
  try {
    spec.window_len = j.at("window_len").get<int>();
    spec.head_mode = head_from(j.at("head_mode").get<std::string>());
    for (const auto& lj : j.at("layers")) {
      const std::string type = lj.at("type").get<std::string>();
      if (type == "conv1d") {
        Conv1dLayer c;
        c.in_channels = lj.at("in_channels").get<int>();
        c.out_channels = lj.at("out_channels").get<int>();
        c.kernel_len = lj.at("kernel_len").get<int>();
        c.stride = lj.at("stride").get<int>();
        c.activation = activation_from(lj.at("activation").get<std::string>());
        spec.layers.emplace_back(c);
      } else if (type == "dense") {
        DenseLayer d;
        d.in_dim = lj.at("in_dim").get<int>();
        d.out_dim = lj.at("out_dim").get<int>();
        d.activation = activation_from(lj.at("activation").get<std::string>());
        spec.layers.emplace_back(d);
      } else {
        throw ConfigError("unknown layer type: " + type);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture json: ") + e.what());
  }
  validate(spec);
  return spec;
}

std::uint64_t spec_hash(const ArchitectureSpec& spec) {
  return fnv1a64(canonical_json(spec));
}

namespace detail {

ShapeChain chain_shapes(const ArchitectureSpec& spec) {
  ShapeChain chain;
  chain.act_size.reserve(spec.layers.size() + 1);
  chain.offsets.reserve(spec.layers.size());

  int channels = 1;
  int length = spec.window_len;
  bool in_dense_stage = false;
  std::size_t flat = static_cast<std::size_t>(spec.window_len);
  chain.act_size.push_back(flat);
  chain.max_act = flat;

  std::size_t offset = 0;
  for (const auto& layer : spec.layers) {
    LayerOffsets off;
    if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      if (in_dense_stage) {
        throw ConfigError("invalid architecture: conv layer after dense layer");
      }
      if (conv->in_channels != channels) {
        throw ConfigError("invalid architecture: conv in_channels breaks the chain");
      }
      if (conv->kernel_len < 1 || conv->stride < 1 || conv->out_channels < 1) {
        throw ConfigError("invalid architecture: conv layer sizes must be positive");
      }
      if (conv->kernel_len > length) {
        throw ConfigError("invalid architecture: kernel longer than its input");
      }
      length = (length - conv->kernel_len) / conv->stride + 1;
      channels = conv->out_channels;
      flat = static_cast<std::size_t>(channels) * length;
      const std::size_t n_w = static_cast<std::size_t>(conv->in_channels) *
                              conv->out_channels * conv->kernel_len;
      off.weights = offset;
      off.biases = offset + n_w;
      offset += n_w + static_cast<std::size_t>(conv->out_channels);
    } else {
      const auto& dense = std::get<DenseLayer>(layer);
      if (dense.in_dim < 1 || dense.out_dim < 1) {
        throw ConfigError("invalid architecture: dense layer sizes must be positive");
      }
      if (static_cast<std::size_t>(dense.in_dim) != flat) {
        throw ConfigError("invalid architecture: dense in_dim breaks the chain");
      }
      in_dense_stage = true;
      flat = static_cast<std::size_t>(dense.out_dim);
      const std::size_t n_w =
          static_cast<std::size_t>(dense.in_dim) * dense.out_dim;
      off.weights = offset;
      off.biases = offset + n_w;
      offset += n_w + static_cast<std::size_t>(dense.out_dim);
    }
    chain.offsets.push_back(off);
    chain.act_size.push_back(flat);
    if (flat > chain.max_act) chain.max_act = flat;
  }
  chain.total_params = offset;
  return chain;
}

void check_hash(std::uint64_t expected, std::uint64_t got, const char* who) {
  if (expected != got) {
    throw ConfigError(std::string(who) + ": parameter vector spec hash mismatch");
  }
}

}  // namespace detail

void validate(const ArchitectureSpec& spec) {
  if (spec.window_len < 1) {
    throw ConfigError("invalid architecture: window_len must be positive");
  }
  if (spec.window_len % 2 == 0) {
    throw ConfigError("invalid architecture: window_len must be odd");
  }
  if (spec.layers.empty()) {
    throw ConfigError("invalid architecture: no layers");
  }
  const auto chain = detail::chain_shapes(spec);
  if (chain.act_size.back() != 1) {
    throw ConfigError("invalid architecture: final output dim must be 1");
  }
  const auto* last = std::get_if<DenseLayer>(&spec.layers.back());
  if (last == nullptr) {
    throw ConfigError("invalid architecture: final layer must be dense");
  }
  if (last->activation != Activation::linear) {
    // The head transform (identity or sigmoid) is selected by head_mode.
    throw ConfigError("invalid architecture: final layer activation must be linear");
  }
}

ArchitectureSpec default_architecture(int window_len, HeadMode head) {
  if (window_len % 2 == 0 || window_len < 31) {
    throw ConfigError(
        "invalid architecture: default stack needs an odd window_len >= 31, got " +
        std::to_string(window_len));
  }
  ArchitectureSpec spec;
  spec.window_len = window_len;
  spec.head_mode = head;
  struct ConvCfg { int out, k; };
  const ConvCfg convs[] = {{30, 10}, {30, 8}, {40, 6}, {50, 5}, {50, 5}};
  int channels = 1;
  int length = window_len;
  for (const auto& c : convs) {
    spec.layers.emplace_back(Conv1dLayer{channels, c.out, c.k, 1, Activation::relu});
    length = length - c.k + 1;
    channels = c.out;
  }
  const int flat = channels * length;
  spec.layers.emplace_back(DenseLayer{flat, 1024, Activation::relu});
  spec.layers.emplace_back(DenseLayer{1024, 1, Activation::linear});
  validate(spec);
  return spec;
}

std::size_t param_count(const ArchitectureSpec& spec) {
  return detail::chain_shapes(spec).total_params;
}

std::vector<LayerSlice> layer_slices(const ArchitectureSpec& spec) {
  const auto chain = detail::chain_shapes(spec);
  std::vector<LayerSlice> out;
  out.reserve(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    LayerSlice slice;
    slice.weights_offset = chain.offsets[l].weights;
    slice.bias_offset = chain.offsets[l].biases;
    slice.weights_count = slice.bias_offset - slice.weights_offset;
    if (const auto* conv = std::get_if<Conv1dLayer>(&spec.layers[l])) {
      slice.bias_count = static_cast<std::size_t>(conv->out_channels);
    } else {
      slice.bias_count =
          static_cast<std::size_t>(std::get<DenseLayer>(spec.layers[l]).out_dim);
    }
    out.push_back(slice);
  }
  return out;
}

}  // namespace fednilm
