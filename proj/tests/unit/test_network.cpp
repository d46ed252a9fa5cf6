#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "safedom/network.hpp"
#include "safedom/rng.hpp"
#include "support/reference.hpp"

using namespace safedom;

namespace {

Network identity_dense_net() {
  // W = I, b = 0 on two inputs
  return Network(2, 2, {DenseLayer{Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2})}});
}

Network random_small_net(std::uint64_t seed) {
  // conv + dense mix, all parameter kinds exercised
  std::vector<Layer> layers;
  layers.push_back(Conv1dLayer{Tensor({3, 1, 3}), Tensor({3}), 2, 1});
  layers.push_back(ReluLayer{});
  layers.push_back(Conv1dLayer{Tensor({2, 3, 3}), Tensor({2}), 1, 0});
  layers.push_back(ReluLayer{});
  layers.push_back(FlattenLayer{});
  layers.push_back(DenseLayer{Tensor({5, 6}), Tensor({5})});
  layers.push_back(ReluLayer{});
  layers.push_back(DenseLayer{Tensor({4, 5}), Tensor({4})});
  Network net(9, 4, std::move(layers));
  glorot_init(net, seed);
  return net;
}

Tensor random_input(std::size_t n, Rng& rng, float scale = 1.0f) {
  Tensor x({n});
  for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform_f(-scale, scale);
  return x;
}

}  // namespace

TEST_CASE("identity dense network returns its input") {
  Network net = identity_dense_net();
  Tensor out = forward(net, Tensor({2}, {1, 2}));
  CHECK(out[0] == 1.0f);
  CHECK(out[1] == 2.0f);
}

TEST_CASE("relu-only network clips negatives") {
  Network net(2, 2, {ReluLayer{}});
  Tensor out = forward(net, Tensor({2}, {-1, 2}));
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 2.0f);
}

TEST_CASE("two-layer network matches hand-computed matrix products") {
  // W1 = [[1,2],[-1,0.5]], b1 = [0.5,-1], ReLU,
  // W2 = [[2,-1],[0,1],[1,1]], b2 = [0,0.5,-0.5], x = [1,1]
  // z1 = [3.5, -1.5] -> relu [3.5, 0] -> logits [7, 0.5, 3]
  Network net(2, 3,
              {DenseLayer{Tensor({2, 2}, {1, 2, -1, 0.5f}),
                          Tensor({2}, {0.5f, -1})},
               ReluLayer{},
               DenseLayer{Tensor({3, 2}, {2, -1, 0, 1, 1, 1}),
                          Tensor({3}, {0, 0.5f, -0.5f})}});
  Tensor out = forward(net, Tensor({2}, {1, 1}));
  CHECK(out[0] == doctest::Approx(7.0f));
  CHECK(out[1] == doctest::Approx(0.5f));
  CHECK(out[2] == doctest::Approx(3.0f));

  // and against the independent double-precision path
  std::vector<double> ref = refmath::forward(net, Tensor({2}, {1, 1}));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(double(out[i]) == doctest::Approx(ref[i]).epsilon(1e-6));
  }
}

TEST_CASE("forward rejects dimension mismatches with a diagnostic") {
  Network net = identity_dense_net();
  CHECK_THROWS_WITH_AS(forward(net, Tensor({3}, {1, 2, 3})),
                       doctest::Contains("expects"), std::invalid_argument);
}

TEST_CASE("network construction rejects non-composing layers") {
  CHECK_THROWS_AS(Network(2, 3,
                          {DenseLayer{Tensor({2, 2}, {1, 0, 0, 1}),
                                      Tensor({2})},
                           DenseLayer{Tensor({3, 4}), Tensor({3})}}),
                  std::invalid_argument);
  // output length must equal output_dim
  CHECK_THROWS_AS(Network(2, 3,
                          {DenseLayer{Tensor({2, 2}, {1, 0, 0, 1}),
                                      Tensor({2})}}),
                  std::invalid_argument);
}

TEST_CASE("cross_entropy spec values") {
  CHECK(cross_entropy(Tensor({3}, {0, 0, 0}), 0) ==
        doctest::Approx(1.0986123f).epsilon(1e-5));
  const float stable = cross_entropy(Tensor({3}, {1000, 0, 0}), 0);
  CHECK(std::isfinite(stable));
  CHECK(stable >= 0.0f);
  CHECK(stable < 1e-6f);
  CHECK_THROWS_AS(cross_entropy(Tensor({3}, {0, 0, 0}), 3),
                  std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(Tensor({3}, {0, 0, 0}), -1),
                  std::invalid_argument);
}

TEST_CASE("cross_entropy matches the high-precision reference on random logits") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = random_input(7, rng, 8.0f);
    std::vector<double> ref_logits(7);
    for (std::size_t i = 0; i < 7; ++i) ref_logits[i] = double(logits[i]);
    for (int y = 0; y < 7; ++y) {
      const double ref = refmath::cross_entropy(ref_logits, y);
      const double got = double(cross_entropy(logits, y));
      CHECK(std::fabs(got - ref) <= 1e-5 * std::max(1.0, std::fabs(ref)));
    }
  }
}

TEST_CASE("cross_entropy is nonnegative on random logits") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor logits = random_input(5, rng, 30.0f);
    for (int y = 0; y < 5; ++y) {
      CHECK(cross_entropy(logits, y) >= 0.0f);
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // Finite differences run through the independent double-precision forward;
  // h = 1e-3 keeps truncation and float32 storage error both small.
  Rng rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    Network net = random_small_net(100 + std::uint64_t(trial));
    Tensor x = random_input(9, rng);
    const int label = int(rng.index(4));
    BackwardResult res = backward(net, x, label);
    CHECK(std::isfinite(res.loss));

    double max_rel = 0.0;
    const double h = 1e-3;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      if (res.grad.weights[li].empty()) continue;
      for (int bias = 0; bias < 2; ++bias) {
        const Tensor& g =
            bias ? res.grad.biases[li] : res.grad.weights[li];
        for (std::size_t e = 0; e < g.size(); ++e) {
          const double plus = refmath::loss_at(
              refmath::perturb_param(net, li, bias, e, float(h)), x, label);
          const double minus = refmath::loss_at(
              refmath::perturb_param(net, li, bias, e, float(-h)), x, label);
          const double fd = (plus - minus) / (2.0 * h);
          const double rel = std::fabs(double(g[e]) - fd) /
                             std::max({std::fabs(fd), std::fabs(double(g[e])), 1e-2});
          max_rel = std::max(max_rel, rel);
        }
      }
    }
    CHECK(max_rel < 1e-4);

    // input gradient against finite differences of the reference forward
    double max_rel_x = 0.0;
    for (std::size_t e = 0; e < x.size(); ++e) {
      Tensor xp = x, xm = x;
      xp[e] += float(h);
      xm[e] -= float(h);
      const double fd =
          (refmath::loss_at(net, xp, label) - refmath::loss_at(net, xm, label)) /
          (2.0 * h);
      const double an = double(res.grad.input[e]);
      max_rel_x = std::max(max_rel_x, std::fabs(an - fd) /
                                          std::max({std::fabs(fd), std::fabs(an), 1e-2}));
    }
    CHECK(max_rel_x < 1e-4);
  }
}

TEST_CASE("saturated softmax has vanishing parameter gradients") {
  // big positive margin on the true class
  Network net(2, 2,
              {DenseLayer{Tensor({2, 2}, {40, 0, -40, 0}), Tensor({2})}});
  BackwardResult res = backward(net, Tensor({2}, {1, 0}), 0);
  CHECK(res.loss < 1e-6f);
  for (const Tensor& t : res.grad.weights) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(std::fabs(t[i]) < 1e-6f);
    }
  }
}

TEST_CASE("linear softmax input gradient equals W^T (p - onehot)") {
  Rng rng(21);
  Tensor W({3, 4});
  for (std::size_t i = 0; i < W.size(); ++i) W[i] = rng.uniform_f(-1, 1);
  Network net(4, 3, {DenseLayer{W, Tensor({3})}});
  Tensor x = random_input(4, rng);
  const int y = 1;
  BackwardResult res = backward(net, x, y);

  std::vector<double> logits = refmath::forward(net, x);
  double m = std::max({logits[0], logits[1], logits[2]});
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  std::vector<double> p(3);
  for (std::size_t i = 0; i < 3; ++i) p[i] = std::exp(logits[i] - m) / s;
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      expected += double(W[i * 4 + j]) * (p[i] - (i == std::size_t(y) ? 1.0 : 0.0));
    }
    CHECK(double(res.grad.input[j]) == doctest::Approx(expected).epsilon(1e-4));
  }
}

TEST_CASE("sgd_step spec examples") {
  Network net = identity_dense_net();
  Gradient g = Gradient::zeros_like(net);
  g.weights[0][0] = 2.0f;

  // alpha = 0 leaves the network unchanged
  Network same = sgd_step(net, g, 0.0f);
  const auto& w0 = std::get<DenseLayer>(same.layers()[0]).weights;
  CHECK(w0[0] == 1.0f);

  // single scalar parameter w=1, grad=2, alpha=0.1 -> 0.8
  Network scalar_net(1, 1, {DenseLayer{Tensor({1, 1}, {1}), Tensor({1})}});
  Gradient sg = Gradient::zeros_like(scalar_net);
  sg.weights[0][0] = 2.0f;
  Network stepped = sgd_step(scalar_net, sg, 0.1f);
  CHECK(std::get<DenseLayer>(stepped.layers()[0]).weights[0] ==
        doctest::Approx(0.8f));

  // NaN gradient is rejected
  sg.weights[0][0] = std::nanf("");
  CHECK_THROWS_AS(sgd_step(scalar_net, sg, 0.1f), std::invalid_argument);
}

TEST_CASE("repeated sgd steps reach the quadratic minimum") {
  // loss = (w - 3)^2 / 2 handled through the pure update rule
  Network net(1, 1, {DenseLayer{Tensor({1, 1}, {10.0f}), Tensor({1})}});
  for (int i = 0; i < 200; ++i) {
    const float w = std::get<DenseLayer>(net.layers()[0]).weights[0];
    Gradient g = Gradient::zeros_like(net);
    g.weights[0][0] = w - 3.0f;
    net = sgd_step(net, g, 0.1f);
  }
  CHECK(std::get<DenseLayer>(net.layers()[0]).weights[0] ==
        doctest::Approx(3.0f).epsilon(1e-5));
}

TEST_CASE("forward and backward are bit-deterministic") {
  Network net = random_small_net(77);
  Rng rng(8);
  Tensor x = random_input(9, rng);
  Tensor a = forward(net, x);
  Tensor b = forward(net, x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  BackwardResult r1 = backward(net, x, 2);
  BackwardResult r2 = backward(net, x, 2);
  CHECK(r1.loss == r2.loss);
  for (std::size_t li = 0; li < r1.grad.weights.size(); ++li) {
    for (std::size_t e = 0; e < r1.grad.weights[li].size(); ++e) {
      CHECK(r1.grad.weights[li][e] == r2.grad.weights[li][e]);
    }
  }
}

TEST_CASE("glorot init is seeded and in range") {
  Network a = make_mlp(4, {8, 8}, 3, 123);
  Network b = make_mlp(4, {8, 8}, 3, 123);
  Network c = make_mlp(4, {8, 8}, 3, 124);
  const auto& wa = std::get<DenseLayer>(a.layers()[0]).weights;
  const auto& wb = std::get<DenseLayer>(b.layers()[0]).weights;
  const auto& wc = std::get<DenseLayer>(c.layers()[0]).weights;
  bool any_diff = false;
  const float limit = std::sqrt(6.0f / (4 + 8));
  for (std::size_t i = 0; i < wa.size(); ++i) {
    CHECK(wa[i] == wb[i]);
    CHECK(std::fabs(wa[i]) <= limit);
    if (wa[i] != wc[i]) any_diff = true;
  }
  CHECK(any_diff);
}
