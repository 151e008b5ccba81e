#pragma once

// Local-updating rules: plain SGD, Adam with bias correction, and the
// per-round exponential learning-rate decay. Pure-functional API: steps
// return new state, nothing is mutated in place.

#include <cmath>
#include <cstdint>
#include <vector>

#include "fednilm/errors.hpp"
#include "fednilm/model.hpp"

namespace fednilm {

enum class OptimizerKind { sgd, adam };

struct OptimizerHyper {
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
  double decay_gamma = 0.98;  // per-round; 1.0 disables decay
};

template <typename S>
struct BasicOptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  std::uint64_t step_count = 0;
  std::vector<S> m;  // first moment (adam)
  std::vector<S> v;  // second moment (adam)
};

using OptimizerState = BasicOptimizerState<float>;

template <typename S>
BasicOptimizerState<S> make_optimizer_state(OptimizerKind kind,
                                            std::size_t n_params) {
  BasicOptimizerState<S> st;
  st.kind = kind;
  if (kind == OptimizerKind::adam) {
    st.m.assign(n_params, S(0));
    st.v.assign(n_params, S(0));
  }
  return st;
}

// lr(round) = lr0 * gamma^round. Held constant across the E local epochs
// within a round.
inline double lr_schedule(std::uint64_t round, const OptimizerHyper& hyper) {
  return hyper.lr0 * std::pow(hyper.decay_gamma, static_cast<double>(round));
}

template <typename S>
BasicParameterVector<S> sgd_step(const BasicParameterVector<S>& params,
                                 const BasicParameterVector<S>& grad,
                                 double lr) {
  if (params.spec_hash != grad.spec_hash) {
    throw ConfigError("sgd_step: spec hash mismatch between params and gradient");
  }
  if (params.count() != grad.count()) {
    throw ConfigError("sgd_step: parameter/gradient count mismatch");
  }
  if (!(lr > 0.0)) {
    throw ConfigError("sgd_step: learning rate must be positive");
  }
  BasicParameterVector<S> out = params;
  const S lr_s = static_cast<S>(lr);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] -= lr_s * grad.values[i];
  }
  return out;
}

template <typename S>
struct AdamResult {
  BasicOptimizerState<S> state;
  BasicParameterVector<S> params;
};

// Standard bias-corrected Adam. The caller supplies the round's learning
// rate from lr_schedule.
template <typename S>
AdamResult<S> adam_step(const BasicOptimizerState<S>& state,
                        const BasicParameterVector<S>& params,
                        const BasicParameterVector<S>& grad, double lr,
                        const OptimizerHyper& hyper) {
  if (state.kind != OptimizerKind::adam) {
    throw ConfigError("adam_step: optimizer state is not adam");
  }
  if (params.spec_hash != grad.spec_hash) {
    throw ConfigError("adam_step: spec hash mismatch between params and gradient");
  }
  if (params.count() != grad.count() || state.m.size() != params.count() ||
      state.v.size() != params.count()) {
    throw ConfigError("adam_step: moment/parameter count mismatch");
  }
  AdamResult<S> out{state, params};
  out.state.step_count = state.step_count + 1;
  const double t = static_cast<double>(out.state.step_count);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  const S b1 = static_cast<S>(hyper.beta1);
  const S b2 = static_cast<S>(hyper.beta2);
  for (std::size_t i = 0; i < params.count(); ++i) {
    const S g = grad.values[i];
    const S m = b1 * state.m[i] + (S(1) - b1) * g;
    const S v = b2 * state.v[i] + (S(1) - b2) * g * g;
    out.state.m[i] = m;
    out.state.v[i] = v;
    const double m_hat = static_cast<double>(m) / bc1;
    const double v_hat = static_cast<double>(v) / bc2;
    out.params.values[i] = static_cast<S>(
        static_cast<double>(params.values[i]) -
        lr * m_hat / (std::sqrt(v_hat) + hyper.eps_stab));
  }
  return out;
}

// Applies one optimizer step of whichever kind the state carries.
template <typename S>
AdamResult<S> optimizer_step(const BasicOptimizerState<S>& state,
                             const BasicParameterVector<S>& params,
                             const BasicParameterVector<S>& grad, double lr,
                             const OptimizerHyper& hyper) {
  if (state.kind == OptimizerKind::sgd) {
    AdamResult<S> out{state, sgd_step(params, grad, lr)};
    out.state.step_count = state.step_count + 1;
    return out;
  }
  return adam_step(state, params, grad, lr, hyper);
}

}  // namespace fednilm
