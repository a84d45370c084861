#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ldankit/parallel.hpp"
#include "ldankit/rng.hpp"
#include "ldankit/tensor.hpp"

// Minimal differentiable-network engine: sequential nets of conv / batchnorm /
// relu / fc / dropout / residual-block / flatten / tanh layers with explicit
// tapes and exact reverse-mode gradients. Tapes are separate objects so one
// parameter set can be run through several batches per step (shared feature
// nets) before a single backward/update pass.
namespace ldankit::nn {

enum class Mode { kTrain, kInfer };

struct LayerSpec {
  enum class Kind {
    kConv3x3,
    kBatchNorm,
    kRelu,
    kFc,
    kDropout,
    kResidualBlock,
    kGlobalFlatten,
    kTanh,
  };
  Kind kind;
  int out_ch = 0;     // conv3x3 / fc output size; residual_block channels
  int stride = 1;     // conv3x3 only, 1 or 2
  double rate = 0.5;  // dropout only, in [0,1)

  static LayerSpec conv3x3(int out_ch, int stride = 1) {
    return {Kind::kConv3x3, out_ch, stride, 0.0};
  }
  static LayerSpec batchnorm() { return {Kind::kBatchNorm}; }
  static LayerSpec relu() { return {Kind::kRelu}; }
  static LayerSpec fc(int out_dim) { return {Kind::kFc, out_dim}; }
  static LayerSpec dropout(double rate) { return {Kind::kDropout, 0, 1, rate}; }
  static LayerSpec residual_block(int ch) { return {Kind::kResidualBlock, ch}; }
  static LayerSpec global_flatten() { return {Kind::kGlobalFlatten}; }
  static LayerSpec tanh() { return {Kind::kTanh}; }
};

const char* layer_kind_name(LayerSpec::Kind k);

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  bool trainable = true;  // batchnorm running stats ride along untrained
};

template <class T>
struct TapeEntry {
  std::vector<Tensor<T>> saved;
  std::vector<TapeEntry<T>> children;
  std::vector<int> saved_shape;
  Mode mode = Mode::kTrain;
};

template <class T>
struct Tape {
  std::vector<TapeEntry<T>> entries;
};

namespace detail {

template <class T>
void conv3x3_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                     Tensor<T>& out, int stride, int threads);
template <class T>
void conv3x3_backward(const Tensor<T>& in, const Tensor<T>& w,
                      const Tensor<T>& gout, Tensor<T>& gin, Tensor<T>& gw,
                      Tensor<T>& gb, int stride, bool want_gin, int threads);

}  // namespace detail

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerSpec spec() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;
  virtual void init_params(Rng& rng) {}
  virtual Tensor<T> forward(const Tensor<T>& in, TapeEntry<T>& tape, Mode mode,
                            Rng& rng, int threads) = 0;
  // Accumulates parameter gradients; returns the input gradient
  // (skipped when want_gin is false, e.g. for the first layer).
  virtual Tensor<T> backward(const TapeEntry<T>& tape, const Tensor<T>& gout,
                             bool want_gin, int threads) = 0;
  virtual void collect_params(const std::string& prefix,
                              std::vector<ParamRef<T>>& out) {}
};

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec,
                                     const std::vector<int>& in_shape);

// A sequential network instantiated from LayerSpecs for a fixed per-sample
// input shape (batch dim excluded). Parameter initialization, forward,
// backward and the parameter list are all deterministic.
template <class T>
class Net {
 public:
  Net() = default;
  Net(std::vector<LayerSpec> specs, std::vector<int> input_shape, uint64_t init_seed);

  Tensor<T> forward(const Tensor<T>& in, Tape<T>& tape, Mode mode, Rng& rng,
                    int threads = 1);
  // Inference without gradient bookkeeping (dropout off, running BN stats).
  Tensor<T> infer(const Tensor<T>& in, int threads = 1);
  Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& grad_out,
                     int threads = 1, bool want_input_grad = false);

  std::vector<ParamRef<T>> params();
  void zero_grads();
  int64_t param_count();

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }
  uint64_t init_seed() const { return init_seed_; }
  bool empty() const { return layers_.empty(); }

  // Deep copy (fresh gradient buffers, same parameter values).
  Net clone() const;

 private:
  std::vector<LayerSpec> specs_;
  std::vector<int> input_shape_, output_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  uint64_t init_seed_ = 0;
};

// ---- losses ----

// Mean of squared differences over all elements; gradient 2(pred-target)/N.
template <class T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
struct CriticLosses {
  double critic_objective = 0;     // mean D(synth) - mean D(real), maximized by D
  double generator_objective = 0;  // -mean D(real), minimized by the feature net
  Tensor<T> d_synth_grad_critic;   // grads of -critic_objective (critic minimizes it)
  Tensor<T> d_real_grad_critic;
  Tensor<T> d_real_grad_generator;
};

template <class T>
CriticLosses<T> critic_losses(const Tensor<T>& d_synth, const Tensor<T>& d_real);

}  // namespace ldankit::nn

#include "ldankit/nn_impl.hpp"
