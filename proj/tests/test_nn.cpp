#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ldankit/checkpoint.hpp"
#include "ldankit/gradcheck.hpp"
#include "ldankit/nn.hpp"
#include "ldankit/optim.hpp"

using namespace ldankit;
using nn::LayerSpec;
using nn::Mode;
using nn::Net;
using nn::Tape;
using nn::Tensor;

namespace {

template <class T>
Tensor<T> filled(std::vector<int> shape, std::initializer_list<T> vals) {
  Tensor<T> t(std::move(shape));
  size_t i = 0;
  for (T v : vals) t.data[i++] = v;
  return t;
}

}  // namespace

TEST_CASE("relu forward and subgradient") {
  Net<double> net({LayerSpec::relu()}, {3}, 1);
  Rng rng(0);
  Tape<double> tape;
  const auto out = net.forward(filled<double>({1, 3}, {-1.0, 0.0, 2.0}), tape,
                               Mode::kTrain, rng);
  CHECK(out.data == std::vector<double>{0.0, 0.0, 2.0});

  Net<double> net2({LayerSpec::relu()}, {2}, 1);
  Tape<double> tape2;
  net2.forward(filled<double>({1, 2}, {-1.0, 2.0}), tape2, Mode::kTrain, rng);
  const auto gin = net2.backward(tape2, filled<double>({1, 2}, {1.0, 1.0}), 1, true);
  CHECK(gin.data == std::vector<double>{0.0, 1.0});
}

TEST_CASE("fc with identity weights is the identity") {
  Net<double> net({LayerSpec::fc(4)}, {4}, 1);
  auto params = net.params();
  for (auto& p : params) {
    for (auto& v : p.value->data) v = 0.0;
    if (p.name.ends_with(".w"))
      for (int i = 0; i < 4; ++i) p.value->data[i * 4 + i] = 1.0;
  }
  Rng rng(0);
  Tape<double> tape;
  const auto in = filled<double>({2, 4}, {1, -2, 3, 4, 0.5, 0, -1, 2});
  const auto out = net.forward(in, tape, Mode::kTrain, rng);
  CHECK(out.data == in.data);
}

TEST_CASE("conv3x3 centered delta kernel copies the input channel") {
  Net<double> net({LayerSpec::conv3x3(1, 1)}, {1, 5, 5}, 1);
  auto params = net.params();
  for (auto& p : params)
    for (auto& v : p.value->data) v = 0.0;
  // kernel center = 1
  params[0].value->data[4] = 1.0;
  Tensor<double> in({2, 1, 5, 5});
  Rng rng(3);
  for (auto& v : in.data) v = rng.normal();
  Tape<double> tape;
  const auto out = net.forward(in, tape, Mode::kTrain, rng);
  for (size_t i = 0; i < in.data.size(); ++i)
    CHECK(out.data[i] == doctest::Approx(in.data[i]));
}

TEST_CASE("conv3x3 against a direct convolution oracle") {
  const int ic = 2, oc = 3, h = 6, w = 5;
  for (int stride : {1, 2}) {
    Net<double> net({LayerSpec::conv3x3(oc, stride)}, {ic, h, w}, 42);
    Tensor<double> in({2, ic, h, w});
    Rng rng(9);
    for (auto& v : in.data) v = rng.normal();
    Tape<double> tape;
    const auto out = net.forward(in, tape, Mode::kTrain, rng);

    auto params = net.params();
    const auto& wgt = *params[0].value;
    const auto& bias = *params[1].value;
    const int oh = out.shape[2], ow = out.shape[3];
    for (int n = 0; n < 2; ++n)
      for (int o = 0; o < oc; ++o)
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            double acc = bias.data[o];
            for (int i = 0; i < ic; ++i)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = stride * y + ky - 1, ix = stride * x + kx - 1;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  acc += wgt.data[((o * ic + i) * 3 + ky) * 3 + kx] *
                         in.data[((n * ic + i) * h + iy) * w + ix];
                }
            const double got = out.data[((n * oc + o) * oh + y) * ow + x];
            CHECK(std::abs(got - acc) < 1e-12);
          }
  }
}

TEST_CASE("fc chain gradient equals the product of weight matrices") {
  Net<double> net({LayerSpec::fc(4), LayerSpec::fc(2)}, {3}, 7);
  Tensor<double> in({1, 3});
  Rng rng(1);
  for (auto& v : in.data) v = rng.normal();
  Tape<double> tape;
  net.forward(in, tape, Mode::kTrain, rng);
  Tensor<double> up({1, 2});
  up.data = {0.3, -1.1};
  net.zero_grads();
  const auto gin = net.backward(tape, up, 1, true);

  auto params = net.params();
  const auto& w1 = *params[0].value;  // (4,3)
  const auto& w2 = *params[2].value;  // (2,4)
  for (int i = 0; i < 3; ++i) {
    double expect = 0;
    for (int o = 0; o < 2; ++o)
      for (int m = 0; m < 4; ++m)
        expect += up.data[o] * w2.data[o * 4 + m] * w1.data[m * 3 + i];
    CHECK(gin.data[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("every layer kind passes the finite-difference suite") {
  const auto results = nn::run_gradient_checks(10);
  for (const auto& r : results) {
    INFO(r.name, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("the corrupted-conv negative control is flagged") {
  const auto results = nn::run_gradient_checks(2, true);
  bool found = false;
  for (const auto& r : results)
    if (r.name == "conv3x3_corrupted_control") {
      found = true;
      CHECK_FALSE(r.pass);
    }
  CHECK(found);
}

TEST_CASE("mse_loss values and gradient") {
  auto [l0, g0] = nn::mse_loss(filled<double>({2}, {1.0, 2.0}),
                               filled<double>({2}, {1.0, 2.0}));
  CHECK(l0 == 0.0);
  CHECK(g0.data == std::vector<double>{0.0, 0.0});

  auto [l1, g1] = nn::mse_loss(filled<double>({2}, {1.0, 0.0}),
                               filled<double>({2}, {0.0, 0.0}));
  CHECK(l1 == doctest::Approx(0.5));
  CHECK(g1.data[0] == doctest::Approx(1.0));
  CHECK(g1.data[1] == 0.0);

  Rng rng(12);
  Tensor<double> p({4, 7}), t({4, 7});
  for (auto& v : p.data) v = rng.normal();
  for (auto& v : t.data) v = rng.normal();
  auto [l, g] = nn::mse_loss(p, t);
  double acc = 0;
  for (size_t i = 0; i < p.data.size(); ++i) {
    const double d = p.data[i] - t.data[i];
    acc += d * d;
  }
  CHECK(std::abs(l - acc / 28.0) < 1e-12);

  CHECK_THROWS_AS(nn::mse_loss(p, filled<double>({2}, {0.0, 0.0})), invalid_input_error);
}

TEST_CASE("critic_losses values") {
  auto even = nn::critic_losses(filled<double>({2}, {1.0, 3.0}),
                                filled<double>({2}, {2.0, 2.0}));
  CHECK(even.critic_objective == doctest::Approx(0.0));

  auto one = nn::critic_losses(filled<double>({1}, {1.0}), filled<double>({1}, {0.0}));
  CHECK(one.critic_objective == doctest::Approx(1.0));
  CHECK(one.generator_objective == doctest::Approx(0.0));

  CHECK_THROWS_AS(nn::critic_losses(Tensor<double>({0}), filled<double>({1}, {0.0})),
                  invalid_input_error);
}

TEST_CASE("optimizer hand-derived steps") {
  const auto results = nn::run_optimizer_checks();
  for (const auto& r : results) {
    INFO(r.name, " err=", r.max_rel_err);
    CHECK(r.pass);
  }
}

TEST_CASE("clip_weights clamps and is idempotent") {
  Tensor<float> p({4});
  p.data = {0.5f, -0.5f, 0.005f, 0.0f};
  Tensor<float> g({4});
  std::vector<nn::ParamRef<float>> refs{{"p", &p, &g, true}};
  nn::clip_weights(refs, 0.01);
  CHECK(p.data == std::vector<float>{0.01f, -0.01f, 0.005f, 0.0f});
  auto snapshot = p.data;
  nn::clip_weights(refs, 0.01);
  CHECK(p.data == snapshot);
  CHECK_THROWS_AS(nn::clip_weights(refs, 0.0), invalid_input_error);
  CHECK_THROWS_AS(nn::clip_weights(refs, -1.0), invalid_input_error);
}

TEST_CASE("dropout infer identity and train scaling") {
  Net<float> net({LayerSpec::dropout(0.5)}, {1000}, 1);
  Tensor<float> in({10, 1000});
  for (auto& v : in.data) v = 1.0f;
  const auto inf = net.infer(in);
  CHECK(inf.data == in.data);  // exact identity

  Rng rng(5);
  Tape<float> tape;
  double total = 0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    const auto out = net.forward(in, tape, Mode::kTrain, rng);
    for (float v : out.data) total += v;
  }
  const double mean = total / (reps * in.numel());
  CHECK(std::abs(mean - 1.0) < 0.02);  // inverted scaling preserves expectation
}

TEST_CASE("batchnorm train-mode statistics") {
  Net<float> net({LayerSpec::batchnorm()}, {3, 8, 8}, 1);
  Tensor<float> in({16, 3, 8, 8});
  Rng rng(8);
  for (auto& v : in.data) v = static_cast<float>(2.5 * rng.normal() - 1.0);
  Tape<float> tape;
  const auto out = net.forward(in, tape, Mode::kTrain, rng);
  const int64_t plane = 64;
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (int n = 0; n < 16; ++n) {
      const float* p = out.ptr() + (n * 3 + c) * plane;
      for (int i = 0; i < plane; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double m = sum / (16 * plane);
    const double var = sq / (16 * plane) - m * m;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-3);  // eps in the denominator shifts slightly
  }
}

TEST_CASE("non-finite activations are poisoned") {
  Net<float> net({LayerSpec::fc(2)}, {2}, 1);
  Tensor<float> in({1, 2});
  in.data = {1.0f, std::numeric_limits<float>::infinity()};
  Tape<float> tape;
  Rng rng(0);
  CHECK_THROWS_AS(net.forward(in, tape, Mode::kTrain, rng), numerical_abort_error);
}

TEST_CASE("net shape validation") {
  Net<float> net({LayerSpec::fc(2)}, {3}, 1);
  Tensor<float> bad({1, 4});
  Tape<float> tape;
  Rng rng(0);
  CHECK_THROWS_AS(net.forward(bad, tape, Mode::kTrain, rng), invalid_input_error);
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  const std::vector<LayerSpec> specs = {
      LayerSpec::conv3x3(4, 1), LayerSpec::batchnorm(), LayerSpec::relu(),
      LayerSpec::residual_block(4), LayerSpec::conv3x3(8, 2), LayerSpec::batchnorm(),
      LayerSpec::relu(), LayerSpec::global_flatten(), LayerSpec::fc(5)};
  Net<float> net(specs, {3, 8, 8}, 99);

  Tensor<float> in({2, 3, 8, 8});
  Rng rng(4);
  for (auto& v : in.data) v = static_cast<float>(rng.normal());
  const auto before = net.infer(in);

  const auto path = std::filesystem::temp_directory_path() / "ldankit_test_net.ckpt";
  nn::CheckpointExtras extras;
  extras.rng_state = Rng(123).state();
  extras.meta = {{"phase", "unit-test"}};
  nn::save_checkpoint(path, net, extras);

  nn::CheckpointExtras loaded_extras;
  Net<float> loaded = nn::load_single_checkpoint(path, &loaded_extras);
  const auto after = loaded.infer(in);
  CHECK(before.data == after.data);
  CHECK(loaded_extras.rng_state.has_value());
  CHECK(*loaded_extras.rng_state == Rng(123).state());
  CHECK(loaded_extras.meta.at("phase") == "unit-test");
  std::filesystem::remove(path);
}

TEST_CASE("optimizer state restore reproduces the trajectory") {
  // train a tiny net; snapshot at step 5; continue to 10; replay from the
  // snapshot and compare bitwise.
  const std::vector<LayerSpec> specs = {LayerSpec::fc(6), LayerSpec::relu(),
                                        LayerSpec::fc(3)};
  auto make_batch = [](int step) {
    Tensor<float> x({4, 5}), y({4, 3});
    Rng rng(derive_seed(1000, "batch", step));
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    for (auto& v : y.data) v = static_cast<float>(rng.normal());
    return std::make_pair(x, y);
  };
  auto step_once = [&](Net<float>& net, nn::AdadeltaState<float>& st, int step) {
    auto [x, y] = make_batch(step);
    Tape<float> tape;
    Rng rng(0);
    const auto out = net.forward(x, tape, Mode::kTrain, rng);
    auto [loss, grad] = nn::mse_loss(out, y);
    net.zero_grads();
    net.backward(tape, grad);
    nn::adadelta_step(st, net.params());
  };

  Net<float> net(specs, {5}, 31);
  nn::AdadeltaState<float> st;
  for (int i = 0; i < 5; ++i) step_once(net, st, i);

  const auto path = std::filesystem::temp_directory_path() / "ldankit_test_resume.ckpt";
  nn::CheckpointExtras extras;
  extras.optim_slots = {{"adadelta.eg", st.eg}, {"adadelta.ex", st.ex}};
  nn::save_checkpoint(path, net, extras);

  for (int i = 5; i < 10; ++i) step_once(net, st, i);

  nn::CheckpointExtras back;
  Net<float> resumed = nn::load_single_checkpoint(path, &back);
  nn::AdadeltaState<float> st2;
  for (auto& [name, slot] : back.optim_slots) {
    if (name == "adadelta.eg") st2.eg = slot;
    if (name == "adadelta.ex") st2.ex = slot;
  }
  for (int i = 5; i < 10; ++i) step_once(resumed, st2, i);

  auto p1 = net.params();
  auto p2 = resumed.params();
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].value->data == p2[i].value->data);
  std::filesystem::remove(path);
}

TEST_CASE("residual block requires matching channels") {
  CHECK_THROWS_AS(Net<float>({LayerSpec::residual_block(8)}, {4, 6, 6}, 1),
                  invalid_input_error);
}

TEST_CASE("batch forwards are deterministic and thread-count independent") {
  const std::vector<LayerSpec> specs = {LayerSpec::conv3x3(6, 1), LayerSpec::batchnorm(),
                                        LayerSpec::relu(), LayerSpec::global_flatten(),
                                        LayerSpec::fc(4)};
  Net<float> net(specs, {3, 10, 10}, 5);
  Tensor<float> in({8, 3, 10, 10});
  Rng rng(6);
  for (auto& v : in.data) v = static_cast<float>(rng.normal());
  const auto a = net.infer(in, 1);
  const auto b = net.infer(in, 4);
  CHECK(a.data == b.data);
}
