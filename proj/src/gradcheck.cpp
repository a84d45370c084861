#include "ldankit/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "ldankit/nn.hpp"
#include "ldankit/optim.hpp"

namespace ldankit::nn {

namespace {

using D = double;

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max({1.0, std::abs(a), std::abs(f)});
}

// Scalar objective J = sum(out .* w_out) for a fixed random weighting, so a
// single backward pass yields every gradient at once.
struct Probe {
  Net<D> net;
  Tensor<D> input;
  Tensor<D> w_out;
  uint64_t rng_seed = 0;  // dropout masks are replayed from this seed

  double objective() {
    Rng rng(rng_seed);
    Tape<D> tape;
    Tensor<D> out = net.forward(input, tape, Mode::kTrain, rng);
    double j = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) j += out.data[i] * w_out.data[i];
    return j;
  }

  // analytic grads: input gradient + parameter gradients
  Tensor<D> analytic_input_grad() {
    Rng rng(rng_seed);
    Tape<D> tape;
    net.zero_grads();
    net.forward(input, tape, Mode::kTrain, rng);
    return net.backward(tape, w_out, 1, true);
  }
};

// Collects every relu pre-activation visible in the tape so inputs that sit
// within the finite-difference step of a kink can be resampled.
void collect_relu_margins(const std::vector<LayerSpec>& specs,
                          const Tape<D>& tape, std::vector<double>& margins) {
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& e = tape.entries[i];
    if (specs[i].kind == LayerSpec::Kind::kRelu) {
      for (const D v : e.saved[0].data) margins.push_back(std::abs(v));
    } else if (specs[i].kind == LayerSpec::Kind::kResidualBlock) {
      for (const D v : e.saved[0].data) margins.push_back(std::abs(v));  // skip sum
      for (const D v : e.children[2].saved[0].data) margins.push_back(std::abs(v));
    }
  }
}

Probe make_probe(const std::vector<LayerSpec>& specs, std::vector<int> in_shape,
                 int batch, uint64_t seed) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Probe p{Net<D>(specs, in_shape, derive_seed(seed, "probe-init", attempt)),
            Tensor<D>{}, Tensor<D>{}, derive_seed(seed, "probe-dropout", attempt)};
    Rng rng(derive_seed(seed, "probe-data", attempt));
    std::vector<int> full = {batch};
    for (int d : in_shape) full.push_back(d);
    p.input = Tensor<D>(full);
    for (auto& v : p.input.data) v = rng.normal();

    Rng rr(p.rng_seed);
    Tape<D> tape;
    Tensor<D> out = p.net.forward(p.input, tape, Mode::kTrain, rr);
    p.w_out = Tensor<D>(out.shape);
    for (auto& v : p.w_out.data) v = rng.normal();

    std::vector<double> margins;
    collect_relu_margins(specs, tape, margins);
    bool ok = true;
    for (double m : margins)
      if (m < 5e-3) ok = false;
    if (ok) return p;
  }
  throw std::runtime_error("gradcheck: could not sample a kink-free input");
}

double check_probe(Probe& p, double corruption = 1.0) {
  const double h = kGradCheckStep;
  Tensor<D> gin = p.analytic_input_grad();
  double worst = 0.0;

  auto fd_at = [&](D* slot) {
    const D keep = *slot;
    *slot = keep + h;
    const double jp = p.objective();
    *slot = keep - h;
    const double jm = p.objective();
    *slot = keep;
    return (jp - jm) / (2.0 * h);
  };

  for (int64_t i = 0; i < p.input.numel(); ++i)
    worst = std::max(worst, rel_err(gin.data[i] * corruption, fd_at(&p.input.data[i])));

  for (auto& pr : p.net.params()) {
    if (!pr.trainable) continue;
    for (int64_t i = 0; i < pr.value->numel(); ++i)
      worst = std::max(worst,
                       rel_err(pr.grad->data[i] * corruption, fd_at(&pr.value->data[i])));
  }
  return worst;
}

double check_losses_mse(uint64_t seed) {
  Rng rng(seed);
  Tensor<D> pred({3, 5}), target({3, 5});
  for (auto& v : pred.data) v = rng.normal();
  for (auto& v : target.data) v = rng.normal();
  auto [loss, grad] = mse_loss(pred, target);
  const double h = kGradCheckStep;
  double worst = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const D keep = pred.data[i];
    pred.data[i] = keep + h;
    const double jp = mse_loss(pred, target).first;
    pred.data[i] = keep - h;
    const double jm = mse_loss(pred, target).first;
    pred.data[i] = keep;
    worst = std::max(worst, rel_err(grad.data[i], (jp - jm) / (2 * h)));
  }
  return worst;
}

double check_losses_critic(uint64_t seed) {
  Rng rng(seed);
  Tensor<D> ds({4, 1}), dr({6, 1});
  for (auto& v : ds.data) v = rng.normal();
  for (auto& v : dr.data) v = rng.normal();
  auto out = critic_losses(ds, dr);
  const double h = kGradCheckStep;
  double worst = 0.0;
  auto critic_obj_neg = [&] { return -critic_losses(ds, dr).critic_objective; };
  auto gen_obj = [&] { return critic_losses(ds, dr).generator_objective; };
  for (int64_t i = 0; i < ds.numel(); ++i) {
    const D keep = ds.data[i];
    ds.data[i] = keep + h;
    const double jp = critic_obj_neg();
    ds.data[i] = keep - h;
    const double jm = critic_obj_neg();
    ds.data[i] = keep;
    worst = std::max(worst, rel_err(out.d_synth_grad_critic.data[i], (jp - jm) / (2 * h)));
  }
  for (int64_t i = 0; i < dr.numel(); ++i) {
    const D keep = dr.data[i];
    dr.data[i] = keep + h;
    const double jp1 = critic_obj_neg(), jp2 = gen_obj();
    dr.data[i] = keep - h;
    const double jm1 = critic_obj_neg(), jm2 = gen_obj();
    dr.data[i] = keep;
    worst = std::max(worst, rel_err(out.d_real_grad_critic.data[i], (jp1 - jm1) / (2 * h)));
    worst = std::max(worst, rel_err(out.d_real_grad_generator.data[i], (jp2 - jm2) / (2 * h)));
  }
  return worst;
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_checks(int seeds, bool corrupt_conv_control) {
  struct Case {
    std::string name;
    std::vector<LayerSpec> specs;
    std::vector<int> in_shape;
    int batch;
  };
  const std::vector<Case> cases = {
      {"conv3x3_s1", {LayerSpec::conv3x3(3, 1)}, {2, 5, 6}, 2},
      {"conv3x3_s2", {LayerSpec::conv3x3(4, 2)}, {3, 7, 5}, 2},
      {"batchnorm_4d", {LayerSpec::batchnorm()}, {3, 4, 4}, 3},
      {"batchnorm_2d", {LayerSpec::batchnorm()}, {6}, 5},
      {"relu", {LayerSpec::relu()}, {4, 3, 3}, 2},
      {"fc", {LayerSpec::fc(4)}, {7}, 3},
      {"fc_chain", {LayerSpec::fc(5), LayerSpec::fc(3)}, {6}, 2},
      {"dropout", {LayerSpec::dropout(0.4)}, {5, 3, 3}, 2},
      {"residual_block", {LayerSpec::residual_block(3)}, {3, 6, 6}, 2},
      {"global_flatten", {LayerSpec::global_flatten()}, {2, 3, 4}, 2},
      {"tanh", {LayerSpec::tanh()}, {8}, 3},
  };

  std::vector<GradCheckEntry> results;
  for (const auto& c : cases) {
    GradCheckEntry e{c.name, 0.0, false};
    for (int s = 0; s < seeds; ++s) {
      Probe p = make_probe(c.specs, c.in_shape, c.batch, derive_seed(1234, c.name, s));
      e.max_rel_err = std::max(e.max_rel_err, check_probe(p));
    }
    e.pass = e.max_rel_err < kGradCheckTol;
    results.push_back(e);
  }

  {
    GradCheckEntry e{"mse_loss", 0.0, false};
    for (int s = 0; s < seeds; ++s)
      e.max_rel_err = std::max(e.max_rel_err, check_losses_mse(derive_seed(99, "mse", s)));
    e.pass = e.max_rel_err < kGradCheckTol;
    results.push_back(e);
  }
  {
    GradCheckEntry e{"critic_losses", 0.0, false};
    for (int s = 0; s < seeds; ++s)
      e.max_rel_err =
          std::max(e.max_rel_err, check_losses_critic(derive_seed(99, "critic", s)));
    e.pass = e.max_rel_err < kGradCheckTol;
    results.push_back(e);
  }

  if (corrupt_conv_control) {
    // negative control: a wrong analytic gradient must be flagged
    GradCheckEntry e{"conv3x3_corrupted_control", 0.0, false};
    Probe p = make_probe({LayerSpec::conv3x3(3, 1)}, {2, 5, 5}, 2,
                         derive_seed(1234, "corrupt", 0));
    e.max_rel_err = check_probe(p, 1.01);
    e.pass = e.max_rel_err < kGradCheckTol;
    results.push_back(e);
  }
  return results;
}

std::vector<GradCheckEntry> run_optimizer_checks() {
  std::vector<GradCheckEntry> out;

  auto scalar_params = [](Tensor<double>& p, Tensor<double>& g) {
    std::vector<ParamRef<double>> refs;
    refs.push_back({"p", &p, &g, true});
    return refs;
  };

  {
    // first step, g=1: dp = -5e-5/sqrt(0.1 + 1e-8)
    Tensor<double> p({1}), g({1});
    g.data[0] = 1.0;
    RmspropState<double> st;
    rmsprop_step(st, scalar_params(p, g));
    const double expect1 = -5e-5 / std::sqrt(0.1 + 1e-8);
    GradCheckEntry e{"rmsprop_step1", std::abs(p.data[0] - expect1), false};
    e.pass = std::abs(p.data[0] - (-1.5811e-4)) < 1e-8 && e.max_rel_err < 1e-12;
    out.push_back(e);
    // second step, g=1: acc = 0.19, dp2 = -5e-5/sqrt(0.19 + 1e-8)
    const double before = p.data[0];
    rmsprop_step(st, scalar_params(p, g));
    const double d2 = p.data[0] - before;
    GradCheckEntry e2{"rmsprop_step2", std::abs(d2 - (-1.1471e-4)), false};
    e2.pass = std::abs(d2 - (-1.1471e-4)) < 1e-8 &&
              std::abs(st.acc[0].data[0] - 0.19) < 1e-12;
    out.push_back(e2);
  }
  {
    // first Adadelta step, g=1: d = -sqrt(1e-6)/sqrt(0.05 + 1e-6)
    Tensor<double> p({1}), g({1});
    g.data[0] = 1.0;
    AdadeltaState<double> st;
    adadelta_step(st, scalar_params(p, g));
    GradCheckEntry e{"adadelta_step1", std::abs(p.data[0] - (-4.4721e-3)), false};
    const double exact = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
    e.pass = std::abs(p.data[0] - (-4.4721e-3)) < 1e-8 &&
             std::abs(p.data[0] - exact) < 1e-12;
    out.push_back(e);
  }
  {
    // zero gradient leaves parameters unchanged
    Tensor<double> p({3}), g({3});
    p.data = {1.0, -2.0, 3.0};
    RmspropState<double> r;
    AdadeltaState<double> a;
    rmsprop_step(r, scalar_params(p, g));
    adadelta_step(a, scalar_params(p, g));
    GradCheckEntry e{"optimizers_zero_grad", 0.0, p.data == std::vector<double>{1.0, -2.0, 3.0}};
    out.push_back(e);
  }
  {
    // Adadelta steady-state step size is invariant to a constant gradient
    // scale: run 100 steps on a quadratic at two scales.
    auto run = [&](double scale) {
      Tensor<double> p({1}), g({1});
      p.data[0] = 1.0;
      AdadeltaState<double> st;
      double last = 0.0;
      for (int i = 0; i < 100; ++i) {
        const double before = p.data[0];
        g.data[0] = scale * p.data[0];  // grad of scale*0.5*p^2
        adadelta_step(st, scalar_params(p, g));
        last = std::abs(p.data[0] - before);
      }
      return last;
    };
    const double a = run(1.0), b = run(100.0);
    const double ratio = a / b;
    GradCheckEntry e{"adadelta_scale_invariance", std::abs(ratio - 1.0), false};
    e.pass = ratio > 0.8 && ratio < 1.25;
    out.push_back(e);
  }
  return out;
}

}  // namespace ldankit::nn
