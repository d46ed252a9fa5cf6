#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "safedom/certify.hpp"
#include "safedom/network.hpp"
#include "safedom/rng.hpp"
#include "support/reference.hpp"

using namespace safedom;

namespace {

Tensor random_vec(std::size_t n, Rng& rng, float lo, float hi) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform_f(lo, hi);
  return t;
}

Network random_relu_net(std::size_t in, std::size_t out, std::uint64_t seed) {
  return make_mlp(in, {8, 6}, out, seed);
}

BoxDomain random_box(std::size_t n, Rng& rng, float radius) {
  Tensor c = random_vec(n, rng, -1.0f, 1.0f);
  BoxDomain box{Tensor::zeros_like(c), Tensor::zeros_like(c)};
  for (std::size_t i = 0; i < n; ++i) {
    const float r = rng.uniform_f(0.0f, radius);
    box.lower[i] = c[i] - r;
    box.upper[i] = c[i] + r;
  }
  return box;
}

// Elementwise min/max of an affine-only network over all box corners,
// evaluated through the double-precision reference path.
std::pair<std::vector<double>, std::vector<double>> corner_enumeration(
    const Network& net, const BoxDomain& box) {
  const std::size_t d = box.dim();
  REQUIRE(d <= 16);
  std::vector<double> lo(net.output_dim(),
                         std::numeric_limits<double>::infinity());
  std::vector<double> hi(net.output_dim(),
                         -std::numeric_limits<double>::infinity());
  for (std::size_t mask = 0; mask < (std::size_t(1) << d); ++mask) {
    std::vector<double> corner(d);
    for (std::size_t i = 0; i < d; ++i) {
      corner[i] = (mask >> i) & 1 ? double(box.upper[i]) : double(box.lower[i]);
    }
    std::vector<double> z = refmath::forward(net, corner);
    for (std::size_t k = 0; k < z.size(); ++k) {
      lo[k] = std::min(lo[k], z[k]);
      hi[k] = std::max(hi[k], z[k]);
    }
  }
  return {lo, hi};
}

}  // namespace

TEST_CASE("degenerate box reproduces the plain forward bitwise") {
  Rng rng(1);
  Network net = random_relu_net(5, 3, 11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_vec(5, rng, -2.0f, 2.0f);
    IntervalTensor bounds = propagate(net, BoxDomain::degenerate(x));
    Tensor z = forward(net, x);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(bounds.lower[i] == z[i]);
      CHECK(bounds.upper[i] == z[i]);
    }
  }
}

TEST_CASE("single dense layer bounds are exact") {
  // W = [[1, -1]], b = [0], box [0,1]^2 -> [-1, 1]
  Network net(2, 1, {DenseLayer{Tensor({1, 2}, {1, -1}), Tensor({1})}});
  BoxDomain box{Tensor({2}, {0, 0}), Tensor({2}, {1, 1})};
  IntervalTensor bounds = propagate(net, box);
  CHECK(bounds.lower[0] == doctest::Approx(-1.0f));
  CHECK(bounds.upper[0] == doctest::Approx(1.0f));

  auto [lo, hi] = corner_enumeration(net, box);
  CHECK(double(bounds.lower[0]) == doctest::Approx(lo[0]).epsilon(1e-5));
  CHECK(double(bounds.upper[0]) == doctest::Approx(hi[0]).epsilon(1e-5));
}

TEST_CASE("sampled points stay inside the propagated bounds") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Network net = random_relu_net(6, 4, 20 + std::uint64_t(trial));
    BoxDomain box = random_box(6, rng, 0.1f);
    IntervalTensor bounds = propagate(net, box);
    std::vector<int> acceptable = {0, 2};
    const float bound = certified_worst_case_loss(net, box, acceptable);
    for (int s = 0; s < 1000; ++s) {
      Tensor x({6});
      for (std::size_t i = 0; i < 6; ++i) {
        x[i] = rng.uniform_f(box.lower[i], box.upper[i]);
      }
      Tensor z = forward(net, x);
      for (std::size_t k = 0; k < z.size(); ++k) {
        CHECK(z[k] >= bounds.lower[k] - 1e-4f);
        CHECK(z[k] <= bounds.upper[k] + 1e-4f);
      }
      CHECK(spec_loss(z, acceptable) <= bound + 1e-4f);
    }
  }
}

TEST_CASE("bounds and certified loss are monotone in box size") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Network net = random_relu_net(5, 4, 40 + std::uint64_t(trial));
    BoxDomain small = random_box(5, rng, 0.08f);
    BoxDomain big = small;
    for (std::size_t i = 0; i < 5; ++i) {
      big.lower[i] -= rng.uniform_f(0.0f, 0.1f);
      big.upper[i] += rng.uniform_f(0.0f, 0.1f);
    }
    IntervalTensor bs = propagate(net, small);
    IntervalTensor bb = propagate(net, big);
    for (std::size_t k = 0; k < bs.lower.size(); ++k) {
      CHECK(bs.lower[k] >= bb.lower[k] - 1e-5f);
      CHECK(bs.upper[k] <= bb.upper[k] + 1e-5f);
    }
    std::vector<int> acceptable = {1, 3};
    CHECK(certified_worst_case_loss(net, small, acceptable) <=
          certified_worst_case_loss(net, big, acceptable) + 1e-5f);
  }
}

TEST_CASE("affine networks match corner enumeration to 1e-5") {
  // Exactness holds for a single affine stage (dense, or conv + flatten);
  // stacking two affine layers multiplies |W2||W1| >= |W2 W1| and is
  // legitimately loose under interval propagation.
  Rng rng(4);
  for (int trial = 0; trial < 8; ++trial) {
    Network net(4, 3,
                {DenseLayer{random_vec(12, rng, -1, 1).reshaped({3, 4}),
                            random_vec(3, rng, -1, 1)}});
    BoxDomain box = random_box(4, rng, 0.5f);
    IntervalTensor bounds = propagate(net, box);
    auto [lo, hi] = corner_enumeration(net, box);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::fabs(double(bounds.lower[k]) - lo[k]) <=
            1e-5 * std::max(1.0, std::fabs(lo[k])));
      CHECK(std::fabs(double(bounds.upper[k]) - hi[k]) <=
            1e-5 * std::max(1.0, std::fabs(hi[k])));
    }
  }
  for (int trial = 0; trial < 8; ++trial) {
    Network net(6, 6,
                {Conv1dLayer{random_vec(6, rng, -1, 1).reshaped({2, 1, 3}),
                             random_vec(2, rng, -1, 1), 2, 1},
                 FlattenLayer{}});
    BoxDomain box = random_box(6, rng, 0.4f);
    IntervalTensor bounds = propagate(net, box);
    auto [lo, hi] = corner_enumeration(net, box);
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(std::fabs(double(bounds.lower[k]) - lo[k]) <=
            1e-5 * std::max(1.0, std::fabs(lo[k])));
      CHECK(std::fabs(double(bounds.upper[k]) - hi[k]) <=
            1e-5 * std::max(1.0, std::fabs(hi[k])));
    }
  }
}

TEST_CASE("certified-safe margin yields a near-zero bound") {
  // bias drives class 0 far above the rest regardless of the input
  Network net(2, 3,
              {DenseLayer{Tensor({3, 2}, {0.01f, 0, 0, 0.01f, 0.01f, 0}),
                          Tensor({3}, {30, -30, -30})}});
  BoxDomain box{Tensor({2}, {-1, -1}), Tensor({2}, {1, 1})};
  std::vector<int> acceptable = {0};
  CHECK(certified_worst_case_loss(net, box, acceptable) < 1e-6f);
  CHECK(is_certified(net, box, acceptable, 0.1f));
}

TEST_CASE("degenerate box with singleton acceptable equals cross entropy") {
  Rng rng(5);
  Network net = random_relu_net(5, 4, 60);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_vec(5, rng, -1.5f, 1.5f);
    const int y = int(rng.index(4));
    std::vector<int> acceptable = {y};
    const float bound =
        certified_worst_case_loss(net, BoxDomain::degenerate(x), acceptable);
    const float ce = cross_entropy(forward(net, x), y);
    CHECK(double(bound) == doctest::Approx(double(ce)).epsilon(1e-5));
  }
}

TEST_CASE("coarse grid search never exceeds the certified bound") {
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    Network net = random_relu_net(2, 3, 70 + std::uint64_t(trial));
    BoxDomain box{Tensor({2}, {-0.4f, 0.1f}), Tensor({2}, {0.2f, 0.7f})};
    std::vector<int> acceptable = {1};
    const float bound = certified_worst_case_loss(net, box, acceptable);
    double grid_max = 0.0;
    for (int i = 0; i <= 60; ++i) {
      for (int j = 0; j <= 60; ++j) {
        Tensor x({2});
        x[0] = box.lower[0] + (box.upper[0] - box.lower[0]) * float(i) / 60.0f;
        x[1] = box.lower[1] + (box.upper[1] - box.lower[1]) * float(j) / 60.0f;
        grid_max = std::max(
            grid_max, refmath::spec_loss(refmath::forward(net, x), acceptable));
      }
    }
    CHECK(grid_max <= double(bound) + 1e-5);
  }
}

TEST_CASE("is_certified thresholds") {
  Network net = random_relu_net(3, 3, 80);
  BoxDomain box{Tensor({3}, {-1, -1, -1}), Tensor({3}, {1, 1, 1})};
  std::vector<int> acceptable = {0};
  CHECK(is_certified(net, box, acceptable,
                     std::numeric_limits<float>::infinity()));
  const float bound = certified_worst_case_loss(net, box, acceptable);
  CHECK(is_certified(net, box, acceptable, bound));
  CHECK_FALSE(is_certified(net, box, acceptable, bound * 0.5f));
}

TEST_CASE("dimension mismatch and empty acceptable set are rejected") {
  Network net = random_relu_net(4, 3, 90);
  BoxDomain wrong{Tensor({3}, {0, 0, 0}), Tensor({3}, {1, 1, 1})};
  CHECK_THROWS_AS(propagate(net, wrong), std::invalid_argument);
  BoxDomain box{Tensor({4}, {0, 0, 0, 0}), Tensor({4}, {1, 1, 1, 1})};
  std::vector<int> empty;
  CHECK_THROWS_AS(certified_worst_case_loss(net, box, empty),
                  std::invalid_argument);
  BoxDomain inverted{Tensor({4}, {1, 1, 1, 1}), Tensor({4}, {0, 0, 0, 0})};
  CHECK_THROWS_AS(propagate(net, inverted), std::invalid_argument);
}

TEST_CASE("certified loss gradient matches finite differences of the bound") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    Network net = random_relu_net(4, 3, 100 + std::uint64_t(trial));
    BoxDomain box = random_box(4, rng, 0.15f);
    std::vector<int> acceptable = {0, 2};
    CertifiedLoss r = certified_loss_grad(net, box, acceptable);
    CHECK(r.bound ==
          doctest::Approx(certified_worst_case_loss(net, box, acceptable)));
    const double h = 1e-3;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      if (r.grad.weights[li].empty()) continue;
      for (int bias = 0; bias < 2; ++bias) {
        const Tensor& g = bias ? r.grad.biases[li] : r.grad.weights[li];
        for (std::size_t e = 0; e < g.size(); ++e) {
          const float plus = certified_worst_case_loss(
              refmath::perturb_param(net, li, bias, e, float(h)), box,
              acceptable);
          const float minus = certified_worst_case_loss(
              refmath::perturb_param(net, li, bias, e, float(-h)), box,
              acceptable);
          const double fd = (double(plus) - double(minus)) / (2.0 * h);
          CHECK(std::fabs(double(g[e]) - fd) <
                5e-3 * std::max(1.0, std::fabs(fd)));
        }
      }
    }
  }
}

TEST_CASE("point to box distance uses clamped residuals") {
  BoxDomain box{Tensor({2}, {0, 0}), Tensor({2}, {1, 2})};
  CHECK(point_box_distance(Tensor({2}, {0.5f, 1.0f}), box, Norm::linf) == 0.0);
  CHECK(point_box_distance(Tensor({2}, {2.0f, 1.0f}), box, Norm::linf) ==
        doctest::Approx(1.0));
  CHECK(point_box_distance(Tensor({2}, {2.0f, 3.0f}), box, Norm::l2) ==
        doctest::Approx(std::sqrt(2.0)));
  CHECK(point_box_distance(Tensor({2}, {-3.0f, 1.0f}), box, Norm::l2) ==
        doctest::Approx(3.0));
}
