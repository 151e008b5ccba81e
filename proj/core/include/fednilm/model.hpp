#pragma once

// Seq2point network: a fixed-topology stack of valid (unpadded) 1-D
// convolutions followed by dense layers, mapping one window of the total
// load signal to the appliance value at the window midpoint. Forward and
// backward passes are hand-written and templated on the scalar type:
// float is the production width, double is used by gradient-check tests.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fednilm/errors.hpp"
#include "fednilm/rng.hpp"

namespace fednilm {

enum class Activation { linear, relu, sigmoid };

enum class HeadMode {
  regression,      // linear head, MSE loss
  classification,  // sigmoid head, binary cross-entropy loss
};

struct Conv1dLayer {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_len = 1;
  int stride = 1;
  Activation activation = Activation::relu;
};

struct DenseLayer {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::linear;
};

using Layer = std::variant<Conv1dLayer, DenseLayer>;

struct ArchitectureSpec {
  int window_len = 0;  // W, odd
  HeadMode head_mode = HeadMode::regression;
  std::vector<Layer> layers;
};

// Canonical serialization: fixed field order, no whitespace. The 64-bit
// FNV-1a digest of these bytes is the spec hash carried by parameter
// vectors, checkpoints and wire messages.
std::string canonical_json(const ArchitectureSpec& spec);
ArchitectureSpec parse_architecture(const std::string& json_text);
std::uint64_t spec_hash(const ArchitectureSpec& spec);

// Validates dimension chaining (convs first, then denses; final output dim 1
// with a linear activation under the head transform). Throws ConfigError.
void validate(const ArchitectureSpec& spec);

// Canonical seq2point stack: conv 30x10, 30x8, 40x6, 50x5, 50x5 (ReLU,
// stride 1), dense 1024 (ReLU), dense 1 (linear). Requires W odd, W >= 31.
ArchitectureSpec default_architecture(int window_len,
                                      HeadMode head = HeadMode::regression);

std::size_t param_count(const ArchitectureSpec& spec);

// Where each layer's weights and biases live inside the flat parameter
// vector (weights first, then biases, layers in order).
struct LayerSlice {
  std::size_t weights_offset = 0;
  std::size_t weights_count = 0;
  std::size_t bias_offset = 0;
  std::size_t bias_count = 0;
};

std::vector<LayerSlice> layer_slices(const ArchitectureSpec& spec);

// Classification probabilities are clamped to this range before the loss
// and before being reported, keeping log() finite.
constexpr double kProbClipLo = 1e-7;
constexpr double kProbClipHi = 1.0 - 1e-7;

template <typename S>
struct BasicParameterVector {
  std::uint64_t spec_hash = 0;
  std::vector<S> values;

  std::size_t count() const noexcept { return values.size(); }
};

using ParameterVector = BasicParameterVector<float>;

template <typename S>
struct BasicBatch {
  std::size_t rows = 0;
  int width = 0;
  std::vector<S> inputs;   // rows x width, row-major
  std::vector<S> targets;  // rows
};

using Batch = BasicBatch<float>;

template <typename S>
struct BackwardResult {
  double loss = 0.0;
  BasicParameterVector<S> gradient;
};

namespace detail {

struct LayerOffsets {
  std::size_t weights = 0;
  std::size_t biases = 0;
};

struct ShapeChain {
  // Per layer boundary: flat activation sizes; for conv layers also
  // (channels, length) of the output.
  std::vector<std::size_t> act_size;          // layers+1 entries
  std::vector<std::pair<int, int>> conv_dims; // (channels, length) per boundary while in conv stage
  std::vector<LayerOffsets> offsets;
  std::size_t total_params = 0;
  std::size_t max_act = 0;
};

ShapeChain chain_shapes(const ArchitectureSpec& spec);

template <typename S>
inline S apply_activation(Activation a, S z) {
  switch (a) {
    case Activation::linear:
      return z;
    case Activation::relu:
      return z > S(0) ? z : S(0);
    case Activation::sigmoid:
      return S(1) / (S(1) + std::exp(-z));
  }
  return z;
}

// Derivative expressed through the post-activation value.
template <typename S>
inline S activation_grad(Activation a, S out) {
  switch (a) {
    case Activation::linear:
      return S(1);
    case Activation::relu:
      return out > S(0) ? S(1) : S(0);
    case Activation::sigmoid:
      return out * (S(1) - out);
  }
  return S(1);
}

void check_hash(std::uint64_t expected, std::uint64_t got, const char* who);

}  // namespace detail

// Deterministic init: per-layer uniform weights in [-a, a], a = sqrt(1/fan_in),
// biases zero. The draw stream is seeded from (seed, spec hash).
template <typename S>
BasicParameterVector<S> init_params(const ArchitectureSpec& spec,
                                    std::uint64_t seed) {
  validate(spec);
  const auto chain = detail::chain_shapes(spec);
  BasicParameterVector<S> out;
  out.spec_hash = spec_hash(spec);
  out.values.assign(chain.total_params, S(0));
  Rng rng(mix_seed(seed, out.spec_hash));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& off = chain.offsets[l];
    std::size_t n_weights = 0;
    double fan_in = 1.0;
    if (const auto* conv = std::get_if<Conv1dLayer>(&spec.layers[l])) {
      n_weights = static_cast<std::size_t>(conv->in_channels) *
                  conv->out_channels * conv->kernel_len;
      fan_in = static_cast<double>(conv->in_channels) * conv->kernel_len;
    } else {
      const auto& dense = std::get<DenseLayer>(spec.layers[l]);
      n_weights = static_cast<std::size_t>(dense.in_dim) * dense.out_dim;
      fan_in = static_cast<double>(dense.in_dim);
    }
    const double a = std::sqrt(1.0 / fan_in);
    for (std::size_t i = 0; i < n_weights; ++i) {
      out.values[off.weights + i] = static_cast<S>(rng.next_symmetric(a));
    }
    // biases stay zero
  }
  return out;
}

namespace detail {

// Runs one sample through the network, filling `acts` with the
// post-activation values at every layer boundary. acts[0] is the input
// window; the final entry holds the raw (pre-head) network output.
template <typename S>
void forward_sample(const ArchitectureSpec& spec, const ShapeChain& chain,
                    std::span<const S> params, std::span<const S> input,
                    std::vector<std::vector<S>>& acts) {
  acts.resize(spec.layers.size() + 1);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& off = chain.offsets[l];
    const auto& in = acts[l];
    auto& out = acts[l + 1];
    out.assign(chain.act_size[l + 1], S(0));
    if (const auto* conv = std::get_if<Conv1dLayer>(&spec.layers[l])) {
      const int c_in = conv->in_channels;
      const int c_out = conv->out_channels;
      const int k = conv->kernel_len;
      const int stride = conv->stride;
      const int len_in = static_cast<int>(in.size()) / c_in;
      const int len_out = (len_in - k) / stride + 1;
      for (int oc = 0; oc < c_out; ++oc) {
        const S* w_oc = params.data() + off.weights +
                        static_cast<std::size_t>(oc) * c_in * k;
        const S bias = params[off.biases + oc];
        S* out_oc = out.data() + static_cast<std::size_t>(oc) * len_out;
        for (int t = 0; t < len_out; ++t) {
          S acc = bias;
          const int base = t * stride;
          for (int ic = 0; ic < c_in; ++ic) {
            const S* w = w_oc + static_cast<std::size_t>(ic) * k;
            const S* x = in.data() + static_cast<std::size_t>(ic) * len_in + base;
            for (int j = 0; j < k; ++j) acc += w[j] * x[j];
          }
          out_oc[t] = apply_activation(conv->activation, acc);
        }
      }
    } else {
      const auto& dense = std::get<DenseLayer>(spec.layers[l]);
      for (int o = 0; o < dense.out_dim; ++o) {
        const S* w = params.data() + off.weights +
                     static_cast<std::size_t>(o) * dense.in_dim;
        S acc = params[off.biases + o];
        for (int i = 0; i < dense.in_dim; ++i) acc += w[i] * in[i];
        out[o] = apply_activation(dense.activation, acc);
      }
    }
  }
}

}  // namespace detail

// One prediction per input row. Regression: the raw linear output.
// Classification: sigmoid of the output, clamped to (0, 1).
template <typename S>
std::vector<S> forward(const ArchitectureSpec& spec,
                       const BasicParameterVector<S>& params,
                       std::span<const S> inputs, std::size_t rows) {
  validate(spec);
  detail::check_hash(spec_hash(spec), params.spec_hash, "forward");
  const auto chain = detail::chain_shapes(spec);
  if (params.count() != chain.total_params) {
    throw ConfigError("forward: parameter count mismatch");
  }
  const std::size_t w = static_cast<std::size_t>(spec.window_len);
  if (inputs.size() != rows * w) {
    throw DataError("forward: input matrix is not rows x window_len");
  }
  std::vector<S> preds(rows);
  std::vector<std::vector<S>> acts;
  for (std::size_t r = 0; r < rows; ++r) {
    detail::forward_sample<S>(spec, chain, params.values,
                              inputs.subspan(r * w, w), acts);
    S y = acts.back()[0];
    if (spec.head_mode == HeadMode::classification) {
      S p = S(1) / (S(1) + std::exp(-y));
      if (p < S(kProbClipLo)) p = S(kProbClipLo);
      if (p > S(kProbClipHi)) p = S(kProbClipHi);
      y = p;
    }
    preds[r] = y;
  }
  return preds;
}

// Mean batch loss: MSE for regression, binary cross-entropy for
// classification (predictions already clamped by forward()).
template <typename S>
double loss(std::span<const S> predictions, std::span<const S> targets,
            HeadMode mode) {
  if (predictions.size() != targets.size()) {
    throw DataError("loss: prediction/target length mismatch");
  }
  if (predictions.empty()) {
    throw DataError("loss: empty batch");
  }
  double acc = 0.0;
  if (mode == HeadMode::regression) {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const double d = static_cast<double>(predictions[i]) - targets[i];
      acc += d * d;
    }
  } else {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      double p = static_cast<double>(predictions[i]);
      if (p < kProbClipLo) p = kProbClipLo;
      if (p > kProbClipHi) p = kProbClipHi;
      const double t = static_cast<double>(targets[i]);
      acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
  }
  return acc / static_cast<double>(predictions.size());
}

// Gradient of the mean batch loss w.r.t. every parameter. Per-sample math
// runs at width S; cross-sample accumulation runs in double and is rounded
// once at the end.
template <typename S>
BackwardResult<S> backward(const ArchitectureSpec& spec,
                           const BasicParameterVector<S>& params,
                           const BasicBatch<S>& batch) {
  validate(spec);
  detail::check_hash(spec_hash(spec), params.spec_hash, "backward");
  const auto chain = detail::chain_shapes(spec);
  if (params.count() != chain.total_params) {
    throw ConfigError("backward: parameter count mismatch");
  }
  if (batch.rows == 0) {
    throw DataError("backward: empty batch");
  }
  if (batch.width != spec.window_len ||
      batch.inputs.size() != batch.rows * static_cast<std::size_t>(batch.width) ||
      batch.targets.size() != batch.rows) {
    throw DataError("backward: batch dimensions do not match the spec");
  }

  std::vector<double> grad_acc(chain.total_params, 0.0);
  double loss_acc = 0.0;
  std::vector<std::vector<S>> acts;
  std::vector<S> delta, delta_prev;

  const std::size_t w = static_cast<std::size_t>(spec.window_len);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    detail::forward_sample<S>(
        spec, chain, params.values,
        std::span<const S>(batch.inputs).subspan(r * w, w), acts);
    const S target = batch.targets[r];
    const S y = acts.back()[0];

    // Per-sample loss and d(loss)/d(raw network output).
    double dl_dy;
    if (spec.head_mode == HeadMode::regression) {
      const double d = static_cast<double>(y) - target;
      loss_acc += d * d;
      dl_dy = 2.0 * d;
    } else {
      const double p_raw = 1.0 / (1.0 + std::exp(-static_cast<double>(y)));
      double p = p_raw;
      bool clipped = false;
      if (p < kProbClipLo) { p = kProbClipLo; clipped = true; }
      if (p > kProbClipHi) { p = kProbClipHi; clipped = true; }
      const double t = static_cast<double>(target);
      loss_acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
      // d(loss)/dp at the clamped point, times d(clamp)/dp, times dp/dy.
      dl_dy = clipped ? 0.0 : (p_raw - t);
    }

    // Backprop. delta holds d(sample loss)/d(post-activation) of the
    // current boundary; the head contributes through the final linear unit.
    delta.assign(1, static_cast<S>(dl_dy));
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
      const auto& off = chain.offsets[li];
      const auto& in = acts[li];
      const auto& out = acts[li + 1];
      delta_prev.assign(in.size(), S(0));
      if (const auto* conv = std::get_if<Conv1dLayer>(&spec.layers[li])) {
        const int c_in = conv->in_channels;
        const int c_out = conv->out_channels;
        const int k = conv->kernel_len;
        const int stride = conv->stride;
        const int len_in = static_cast<int>(in.size()) / c_in;
        const int len_out = static_cast<int>(out.size()) / c_out;
        for (int oc = 0; oc < c_out; ++oc) {
          const std::size_t w_off =
              off.weights + static_cast<std::size_t>(oc) * c_in * k;
          for (int t = 0; t < len_out; ++t) {
            const std::size_t oi = static_cast<std::size_t>(oc) * len_out + t;
            const S dz = delta[oi] * detail::activation_grad(conv->activation, out[oi]);
            if (dz == S(0)) continue;
            grad_acc[off.biases + oc] += static_cast<double>(dz);
            const int base = t * stride;
            for (int ic = 0; ic < c_in; ++ic) {
              const std::size_t x_off = static_cast<std::size_t>(ic) * len_in + base;
              const std::size_t wi = w_off + static_cast<std::size_t>(ic) * k;
              for (int j = 0; j < k; ++j) {
                grad_acc[wi + j] += static_cast<double>(dz) * in[x_off + j];
                delta_prev[x_off + j] += params.values[wi + j] * dz;
              }
            }
          }
        }
      } else {
        const auto& dense = std::get<DenseLayer>(spec.layers[li]);
        for (int o = 0; o < dense.out_dim; ++o) {
          const S dz = delta[o] * detail::activation_grad(dense.activation, out[o]);
          if (dz == S(0)) continue;
          grad_acc[off.biases + o] += static_cast<double>(dz);
          const std::size_t w_off =
              off.weights + static_cast<std::size_t>(o) * dense.in_dim;
          for (int i = 0; i < dense.in_dim; ++i) {
            grad_acc[w_off + i] += static_cast<double>(dz) * in[i];
            delta_prev[i] += params.values[w_off + i] * dz;
          }
        }
      }
      delta.swap(delta_prev);
    }
  }

  BackwardResult<S> result;
  result.loss = loss_acc / static_cast<double>(batch.rows);
  result.gradient.spec_hash = params.spec_hash;
  result.gradient.values.resize(chain.total_params);
  const double inv_b = 1.0 / static_cast<double>(batch.rows);
  for (std::size_t i = 0; i < chain.total_params; ++i) {
    result.gradient.values[i] = static_cast<S>(grad_acc[i] * inv_b);
  }
  return result;
}

}  // namespace fednilm
