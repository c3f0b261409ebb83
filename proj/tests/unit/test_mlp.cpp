#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "v2x/mlp.hpp"
#include "v2x/rng.hpp"

using namespace v2x;

namespace {

// Central-difference oracle for d(loss)/d(parameter).
double fd_gradient(Mlp net, const Batch& batch, int layer, bool bias,
                   std::size_t idx, double h = 1.0e-5) {
  Gradients unused;
  auto& param = bias ? net.biases[layer][idx] : net.weights[layer][idx];
  const double saved = param;
  param = saved + h;
  const double up = td_loss_and_gradients(net, batch, unused);
  param = saved - h;
  const double down = td_loss_and_gradients(net, batch, unused);
  param = saved;
  return (up - down) / (2.0 * h);
}

Batch random_batch(int in_dim, int out_dim, int size, SplitMix64& rng) {
  Batch b;
  for (int i = 0; i < size; ++i) {
    std::vector<double> x(in_dim);
    for (auto& v : x) v = 2.0 * rng.uniform01() - 1.0;
    b.x.push_back(std::move(x));
    b.action.push_back(static_cast<int>(rng.below(out_dim)));
    b.target.push_back(2.0 * rng.uniform01() - 1.0);
  }
  return b;
}

// Relu kinks make finite differences unreliable when a pre-activation sits
// within h of zero; regenerate the batch until the net is locally smooth.
bool batch_is_smooth(const Mlp& net, const Batch& batch, double margin) {
  Trace tr;
  for (const auto& x : batch.x) {
    forward_with_trace(net, x, tr);
    for (int l = 0; l < net.layer_count(); ++l) {
      if (net.acts[l] != Activation::kRelu) continue;
      for (double z : tr.pre[l])
        if (std::fabs(z) < margin) return false;
    }
  }
  return true;
}

void check_gradients(const Mlp& net, const Batch& batch, double tol) {
  Gradients grads;
  td_loss_and_gradients(net, batch, grads);
  for (int l = 0; l < net.layer_count(); ++l) {
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
      const double fd = fd_gradient(net, batch, l, false, i);
      const double an = grads.w[l][i];
      const double err = std::fabs(an - fd);
      CHECK(err <= tol * std::max({std::fabs(an), std::fabs(fd), 1e-3}));
    }
    for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
      const double fd = fd_gradient(net, batch, l, true, i);
      const double an = grads.b[l][i];
      const double err = std::fabs(an - fd);
      CHECK(err <= tol * std::max({std::fabs(an), std::fabs(fd), 1e-3}));
    }
  }
}

}  // namespace

TEST_CASE("sizing rule") {
  const Mlp a = build_mlp(24, 16, 1);
  CHECK(a.dims == std::vector<int>{24, 128, 72, 48, 16});
  CHECK(a.acts == std::vector<Activation>{Activation::kTanh, Activation::kRelu,
                                          Activation::kTanh, Activation::kRelu});
  const Mlp b = build_mlp(19, 16, 1);
  CHECK(b.dims == std::vector<int>{19, 103, 57, 38, 16});
  const Mlp c = build_mlp(80, 32, 1);
  CHECK(c.dims == std::vector<int>{80, 408, 240, 160, 32});
  const Mlp d = build_mlp(24, 16, 1, /*linear_output=*/true);
  CHECK(d.acts.back() == Activation::kLinear);
}

TEST_CASE("forward basics") {
  // all-zero weights: output is the activation of the bias
  Mlp net = make_mlp({2, 2}, {Activation::kTanh}, 5);
  for (auto& w : net.weights[0]) w = 0.0;
  net.biases[0] = {0.5, -0.25};
  const auto y = forward(net, std::vector<double>{3.0, -7.0});
  CHECK(y[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(std::tanh(-0.25)).epsilon(1e-15));

  // single linear layer: W x + b
  Mlp lin = make_mlp({2, 2}, {Activation::kLinear}, 5);
  lin.weights[0] = {1.0, 2.0, -3.0, 0.5};
  lin.biases[0] = {0.1, -0.2};
  const auto z = forward(lin, std::vector<double>{2.0, 1.0});
  CHECK(z[0] == doctest::Approx(1.0 * 2 + 2.0 * 1 + 0.1).epsilon(1e-15));
  CHECK(z[1] == doctest::Approx(-3.0 * 2 + 0.5 * 1 - 0.2).epsilon(1e-15));

  // determinism
  const Mlp r = build_mlp(6, 4, 77);
  const std::vector<double> x = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  CHECK(forward(r, x) == forward(r, x));

  CHECK_THROWS_AS(forward(r, std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("trace matches forward") {
  const Mlp net = build_mlp(5, 3, 9);
  const std::vector<double> x = {0.3, -0.1, 0.9, -0.7, 0.2};
  Trace tr;
  const auto y = forward_with_trace(net, x, tr);
  CHECK(tr.pre.size() == static_cast<std::size_t>(net.layer_count()));
  CHECK(tr.post.size() == static_cast<std::size_t>(net.layer_count()));
  CHECK(tr.post.back() == y);
  CHECK(y == forward(net, x));

  // zero input on a zero-bias net traces zero everywhere
  Mlp zb = make_mlp({3, 4, 2}, {Activation::kTanh, Activation::kLinear}, 3);
  for (auto& b : zb.biases)
    for (auto& v : b) v = 0.0;
  Trace tz;
  forward_with_trace(zb, std::vector<double>{0.0, 0.0, 0.0}, tz);
  for (const auto& layer : tz.post)
    for (double v : layer) CHECK(v == 0.0);
}

TEST_CASE("weight copy") {
  Mlp a = build_mlp(6, 4, 1);
  Mlp b = build_mlp(6, 4, 2);
  SplitMix64 rng(4);
  const std::vector<double> x = [&] {
    std::vector<double> v(6);
    for (auto& e : v) e = rng.uniform01();
    return v;
  }();
  CHECK(forward(a, x) != forward(b, x));
  copy_weights(a, b);
  CHECK(forward(a, x) == forward(b, x));
  copy_weights(a, b);  // idempotent
  CHECK(forward(a, x) == forward(b, x));
  CHECK(param_hash(a) == param_hash(b));

  Mlp c = build_mlp(5, 4, 3);
  CHECK_THROWS_AS(copy_weights(a, c), std::invalid_argument);
}

TEST_CASE("parameter counting") {
  const Mlp tiny = make_mlp({2, 1}, {Activation::kLinear}, 1);
  CHECK(param_count(tiny) == 3);
  CHECK(param_count(build_mlp(24, 16, 1)) == 16776);
  const double ratio = static_cast<double>(param_count(build_mlp(19, 16, 1))) /
                       static_cast<double>(param_count(build_mlp(24, 16, 1)));
  CHECK(ratio == doctest::Approx(0.65).epsilon(0.05));

  std::size_t prev = 0;
  for (int in = 4; in <= 32; in += 4) {
    const std::size_t p = param_count(build_mlp(in, 8, 1));
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("zero TD error leaves parameters untouched") {
  Mlp net = build_mlp(4, 3, 11);
  const std::vector<double> x = {0.2, -0.4, 0.6, 0.1};
  const auto q = forward(net, x);
  Batch batch;
  batch.x = {x, x};
  batch.action = {0, 2};
  batch.target = {q[0], q[2]};
  const std::uint64_t before = param_hash(net);
  const double loss = backward_update(net, batch, 0.01);
  CHECK(loss == 0.0);
  CHECK(param_hash(net) == before);
}

TEST_CASE("analytic gradients match central differences") {
  SplitMix64 rng(2024);

  // smooth 4-2-2 net (tanh/linear)
  {
    const Mlp net =
        make_mlp({4, 2, 2}, {Activation::kTanh, Activation::kLinear}, 31);
    for (int rep = 0; rep < 10; ++rep) {
      const Batch batch = random_batch(4, 2, 5, rng);
      check_gradients(net, batch, 1.0e-4);
    }
  }

  // tanh/relu/tanh/relu stack as used by the Q-nets, away from kinks
  {
    const Mlp net = build_mlp(4, 4, 57);
    int done = 0, guard = 0;
    while (done < 5 && guard < 200) {
      ++guard;
      const Batch batch = random_batch(4, 4, 4, rng);
      if (!batch_is_smooth(net, batch, 1.0e-3)) continue;
      check_gradients(net, batch, 1.0e-4);
      ++done;
    }
    CHECK(done == 5);
  }
}

TEST_CASE("repeated updates drive a sample's TD error to zero") {
  Mlp net = build_mlp(4, 3, 21);
  const std::vector<double> x = {0.5, -0.5, 0.25, 0.75};
  Batch batch;
  batch.x = {x};
  batch.action = {1};
  batch.target = {1.7};
  double loss = 1e300;
  double lr = 0.01;
  for (int i = 0; i < 4000; ++i) {
    loss = backward_update(net, batch, lr);
    lr *= 1.0 - 2.0e-3;  // annealed, as in training
  }
  CHECK(loss < 1.0e-6);
}

TEST_CASE("learning-rate schedule closed form") {
  double lr = 0.01;
  for (int i = 0; i < 10000; ++i) lr *= (1.0 - 1.0e-4);
  CHECK(lr == doctest::Approx(0.003678610464).epsilon(1e-9));
}

TEST_CASE("checkpoint round trip") {
  Mlp net = build_mlp(6, 4, 123);
  // park some optimiser state so the constants travel through the header
  net.rms_decay = 0.9;
  net.rms_eps = 1e-8;
  const std::string path = "/tmp/v2x_test_ckpt.bin";
  save_checkpoint(net, path, 0xdeadbeef);
  std::uint64_t seed = 0;
  const Mlp back = load_checkpoint(path, &seed);
  CHECK(seed == 0xdeadbeef);
  CHECK(back.dims == net.dims);
  CHECK(back.acts == net.acts);
  CHECK(back.weights == net.weights);
  CHECK(back.biases == net.biases);
  CHECK(back.rms_decay == net.rms_decay);
  CHECK(back.rms_eps == net.rms_eps);
  std::remove(path.c_str());
}
