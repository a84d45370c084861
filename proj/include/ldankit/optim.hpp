#pragma once

#include <cmath>
#include <vector>

#include "ldankit/nn.hpp"

namespace ldankit::nn {

// acc <- rho*acc + (1-rho)*g^2 ; p <- p - lr*g/sqrt(acc+eps)
// WGAN-convention defaults: the critic trains with lr 5e-5.
template <class T>
struct RmspropState {
  double lr = 5e-5;
  double rho = 0.9;
  double eps = 1e-8;
  std::vector<Tensor<T>> acc;  // one per trainable param, lazily sized
};

// Eg <- rho*Eg + (1-rho)*g^2 ; d = -sqrt(Ex+eps)/sqrt(Eg+eps)*g ;
// Ex <- rho*Ex + (1-rho)*d^2 ; p <- p + d
template <class T>
struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  std::vector<Tensor<T>> eg, ex;
};

namespace detail {

template <class T>
void bind_slot(std::vector<Tensor<T>>& slot, const std::vector<ParamRef<T>>& params) {
  size_t n_train = 0;
  for (const auto& p : params)
    if (p.trainable) ++n_train;
  if (slot.empty()) {
    for (const auto& p : params)
      if (p.trainable) slot.push_back(zeros_like(*p.value));
    return;
  }
  if (slot.size() != n_train)
    throw invalid_input_error("optimizer state does not match parameter list");
  size_t i = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (slot[i].shape != p.value->shape)
      throw invalid_input_error("optimizer accumulator shape mismatch");
    ++i;
  }
}

}  // namespace detail

template <class T>
void rmsprop_step(RmspropState<T>& state, std::vector<ParamRef<T>> params) {
  detail::bind_slot(state.acc, params);
  size_t slot = 0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    if (!p.grad || p.grad->shape != p.value->shape)
      throw invalid_input_error("rmsprop_step: gradient shape mismatch");
    Tensor<T>& acc = state.acc[slot++];
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const double g = p.grad->data[i];
      const double a = state.rho * acc.data[i] + (1.0 - state.rho) * g * g;
      acc.data[i] = static_cast<T>(a);
      p.value->data[i] -= static_cast<T>(state.lr * g / std::sqrt(a + state.eps));
    }
  }
}

template <class T>
void adadelta_step(AdadeltaState<T>& state, std::vector<ParamRef<T>> params) {
  detail::bind_slot(state.eg, params);
  detail::bind_slot(state.ex, params);
  size_t slot = 0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    if (!p.grad || p.grad->shape != p.value->shape)
      throw invalid_input_error("adadelta_step: gradient shape mismatch");
    Tensor<T>& eg = state.eg[slot];
    Tensor<T>& ex = state.ex[slot];
    ++slot;
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const double g = p.grad->data[i];
      const double eg2 = state.rho * eg.data[i] + (1.0 - state.rho) * g * g;
      eg.data[i] = static_cast<T>(eg2);
      const double d = -std::sqrt(static_cast<double>(ex.data[i]) + state.eps) /
                       std::sqrt(eg2 + state.eps) * g;
      ex.data[i] = static_cast<T>(state.rho * ex.data[i] + (1.0 - state.rho) * d * d);
      p.value->data[i] += static_cast<T>(d);
    }
  }
}

// Elementwise clamp of every trainable parameter to [-c, c]; idempotent.
template <class T>
void clip_weights(std::vector<ParamRef<T>> params, double c) {
  if (!(c > 0.0)) throw invalid_input_error("clip_weights: c must be positive");
  const T lo = static_cast<T>(-c), hi = static_cast<T>(c);
  for (auto& p : params) {
    if (!p.trainable) continue;
    for (auto& v : p.value->data) v = std::min(hi, std::max(lo, v));
  }
}

}  // namespace ldankit::nn
