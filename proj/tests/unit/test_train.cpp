#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "safedom/train.hpp"
#include "safedom/rng.hpp"
#include "support/reference.hpp"

using namespace safedom;

namespace {

Tensor random_vec(std::size_t n, Rng& rng, float lo, float hi) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.uniform_f(lo, hi);
  return t;
}

Dataset blobs(std::size_t n, std::uint64_t seed, int classes = 3) {
  Dataset ds;
  ds.input_dim = 2;
  ds.num_classes = std::size_t(classes);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = int(i % std::size_t(classes));
    const double angle = 2.0 * 3.14159265358979 * double(label) / classes;
    Tensor x({2});
    x[0] = float(std::cos(angle) + rng.normal() * 0.25);
    x[1] = float(std::sin(angle) + rng.normal() * 0.25);
    ds.add(std::move(x), label);
  }
  return ds;
}

bool nets_identical(const Network& a, const Network& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    const auto* da = std::get_if<DenseLayer>(&a.layers()[i]);
    const auto* db = std::get_if<DenseLayer>(&b.layers()[i]);
    if ((da == nullptr) != (db == nullptr)) return false;
    if (da) {
      for (std::size_t e = 0; e < da->weights.size(); ++e) {
        if (da->weights[e] != db->weights[e]) return false;
      }
      for (std::size_t e = 0; e < da->bias.size(); ++e) {
        if (da->bias[e] != db->bias[e]) return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("empirical risk on a batch of one equals backward") {
  Rng rng(1);
  Network net = make_mlp(3, {6}, 2, 10);
  Sample s{random_vec(3, rng, -1, 1), 1};
  auto [loss, grad] = empirical_risk_grad(net, std::vector<Sample>{s});
  BackwardResult ref = backward(net, s.x, s.label);
  CHECK(loss == ref.loss);
  for (std::size_t li = 0; li < grad.weights.size(); ++li) {
    for (std::size_t e = 0; e < grad.weights[li].size(); ++e) {
      CHECK(grad.weights[li][e] == ref.grad.weights[li][e]);
    }
  }
}

TEST_CASE("duplicated samples keep the mean loss unchanged") {
  Rng rng(2);
  Network net = make_mlp(3, {5}, 2, 11);
  Sample s{random_vec(3, rng, -1, 1), 0};
  auto [single, g1] = empirical_risk_grad(net, std::vector<Sample>{s});
  auto [dup, g2] = empirical_risk_grad(net, std::vector<Sample>{s, s, s, s});
  CHECK(dup == doctest::Approx(single).epsilon(1e-6));
  for (std::size_t li = 0; li < g1.weights.size(); ++li) {
    for (std::size_t e = 0; e < g1.weights[li].size(); ++e) {
      CHECK(g2.weights[li][e] == doctest::Approx(g1.weights[li][e]).epsilon(1e-4));
    }
  }
}

TEST_CASE("batch mean matches independent per-sample summation") {
  Dataset ds = blobs(37, 3);
  Network net = make_mlp(2, {8}, 3, 12);
  auto [loss, grad] = empirical_risk_grad(net, ds.samples);
  double acc = 0.0;
  for (const Sample& s : ds.samples) {
    acc += refmath::loss_at(net, s.x, s.label);
  }
  CHECK(double(loss) == doctest::Approx(acc / double(ds.size())).epsilon(1e-6));
}

TEST_CASE("degenerate domains reduce the safety term to empirical risk") {
  Dataset ds = blobs(6, 4);
  Network net = make_mlp(2, {6}, 3, 13);
  std::vector<SafetyDomain> domains;
  for (const Sample& s : ds.samples) {
    domains.push_back(SafetyDomain{BoxDomain::degenerate(s.x), {s.label}});
  }
  Rng rng(0);
  AttackConfig pgd;
  auto [certified, gc] =
      safety_term_grad(net, domains, InnerMode::certified, pgd, rng);
  auto [erm, ge] = empirical_risk_grad(net, ds.samples);
  CHECK(double(certified) == doctest::Approx(double(erm)).epsilon(1e-5));
  for (std::size_t li = 0; li < gc.weights.size(); ++li) {
    for (std::size_t e = 0; e < gc.weights[li].size(); ++e) {
      CHECK(double(gc.weights[li][e]) ==
            doctest::Approx(double(ge.weights[li][e])).epsilon(1e-3).scale(1.0));
    }
  }
}

TEST_CASE("certified term dominates the empirical term") {
  Rng rng(5);
  Network net = make_mlp(3, {7}, 4, 14);
  std::vector<SafetyDomain> domains;
  for (int i = 0; i < 6; ++i) {
    Tensor c = random_vec(3, rng, -1, 1);
    domains.push_back(
        SafetyDomain{BoxDomain::ball(c, rng.uniform_f(0.05f, 0.3f)), {0, 2}});
  }
  AttackConfig pgd;
  pgd.steps = 15;
  Rng r1(7), r2(7);
  auto [cert, gc] =
      safety_term_grad(net, domains, InnerMode::certified, pgd, r1);
  auto [emp, ge] =
      safety_term_grad(net, domains, InnerMode::empirical, pgd, r2);
  CHECK(emp <= cert + 1e-6f);
}

TEST_CASE("lambda zero and empty domains are bit-identical to ERM") {
  Dataset ds = blobs(48, 6);
  Network init = make_mlp(2, {8}, 3, 15);
  std::vector<SafetyDomain> domains = {
      SafetyDomain{BoxDomain{Tensor({2}, {5, 5}), Tensor({2}, {6, 6})}, {0}}};

  TrainConfig cfg;
  cfg.lambda = 0.0f;
  cfg.min_epochs = 12;
  cfg.max_epochs = 12;
  cfg.batch_train = 16;
  cfg.learning_rate = 0.1f;
  cfg.seed = 77;

  TrainResult with_domains = train(init, ds, domains, cfg);
  TrainResult erm = train(init, ds, {}, cfg);
  CHECK(nets_identical(with_domains.net, erm.net));
  REQUIRE(with_domains.report.trace.size() == erm.report.trace.size());
  for (std::size_t e = 0; e < erm.report.trace.size(); ++e) {
    CHECK(with_domains.report.trace[e].train_loss ==
          erm.report.trace[e].train_loss);
  }

  TrainConfig cfg1 = cfg;
  cfg1.lambda = 1.0f;
  TrainResult with_safety = train(init, ds, domains, cfg1);
  CHECK_FALSE(nets_identical(with_safety.net, erm.net));
}

TEST_CASE("epsilon-ball singleton domains reproduce adversarial training") {
  // Worst-case term over an eps-ball with the sample's own label equals the
  // cross-entropy at the attacked point.
  Dataset ds = blobs(8, 8);
  Network net = make_mlp(2, {6}, 3, 16);
  const float eps = 0.15f;
  std::vector<SafetyDomain> domains;
  for (const Sample& s : ds.samples) {
    domains.push_back(SafetyDomain{BoxDomain::ball(s.x, eps), {s.label}});
  }
  AttackConfig pgd;
  pgd.steps = 1;
  pgd.step_size = eps;
  pgd.random_init = false;

  Rng rng(9);
  auto [term, grad] =
      safety_term_grad(net, domains, InnerMode::empirical, pgd, rng);

  // manual adversarial training step: attack each sample, then average the
  // plain cross-entropy gradients at the attacked points
  double loss_acc = 0.0;
  Gradient manual = Gradient::zeros_like(net);
  for (const Sample& s : ds.samples) {
    AttackConfig fg = pgd;
    fg.epsilon = eps;
    Tensor adv = fgsm(net, s, fg);
    BackwardResult res = backward(net, adv, s.label);
    loss_acc += double(res.loss);
    manual.accumulate(res.grad);
  }
  manual.scale(1.0f / float(ds.size()));
  CHECK(double(term) ==
        doctest::Approx(loss_acc / double(ds.size())).epsilon(1e-5));
  for (std::size_t li = 0; li < grad.weights.size(); ++li) {
    for (std::size_t e = 0; e < grad.weights[li].size(); ++e) {
      CHECK(double(grad.weights[li][e]) ==
            doctest::Approx(double(manual.weights[li][e]))
                .epsilon(1e-3)
                .scale(1.0));
    }
  }
}

TEST_CASE("certified training on a toy box converges and survives grid search") {
  Dataset ds = blobs(60, 10);
  Network init = make_mlp(2, {10}, 3, 17);
  // one box in the class-0 corner of the input square; class 0 acceptable
  std::vector<SafetyDomain> domains = {SafetyDomain{
      BoxDomain{Tensor({2}, {0.6f, -0.4f}), Tensor({2}, {1.4f, 0.4f})}, {0}}};

  TrainConfig cfg;
  cfg.lambda = 1.0f;
  cfg.delta = 0.1f;
  cfg.batch_train = 16;
  cfg.batch_safety = 1;
  cfg.learning_rate = 0.1f;
  cfg.min_epochs = 5;
  cfg.max_epochs = 250;
  cfg.seed = 31;
  TrainResult result = train(init, ds, domains, cfg);
  CHECK(result.report.converged);
  CHECK(result.report.final_safety_bound <= cfg.delta);
  REQUIRE(size_t(result.report.epochs_run) == result.report.trace.size());

  // post-hoc grid search over the box: every sampled spec loss under delta
  const BoxDomain& box = domains[0].box;
  std::vector<int> acceptable = {0};
  double grid_max = 0.0;
  for (int i = 0; i <= 50; ++i) {
    for (int j = 0; j <= 50; ++j) {
      Tensor x({2});
      x[0] = box.lower[0] + (box.upper[0] - box.lower[0]) * float(i) / 50.0f;
      x[1] = box.lower[1] + (box.upper[1] - box.lower[1]) * float(j) / 50.0f;
      grid_max = std::max(grid_max, refmath::spec_loss(
                                        refmath::forward(result.net, x),
                                        acceptable));
    }
  }
  CHECK(grid_max <= double(cfg.delta) + 1e-5);
}

TEST_CASE("training is reproducible from the seed") {
  Dataset ds = blobs(40, 11);
  Network init = make_mlp(2, {8}, 3, 18);
  std::vector<SafetyDomain> domains = {SafetyDomain{
      BoxDomain{Tensor({2}, {0.8f, -0.2f}), Tensor({2}, {1.2f, 0.2f})}, {0}}};
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.min_epochs = 8;
  cfg.seed = 55;
  TrainResult a = train(init, ds, domains, cfg);
  TrainResult b = train(init, ds, domains, cfg);
  CHECK(nets_identical(a.net, b.net));
  CHECK(a.report.final_safety_bound == b.report.final_safety_bound);
  CHECK(a.report.epochs_run == b.report.epochs_run);
  for (std::size_t e = 0; e < a.report.trace.size(); ++e) {
    CHECK(a.report.trace[e].train_loss == b.report.trace[e].train_loss);
    CHECK(a.report.trace[e].safety_term == b.report.trace[e].safety_term);
  }
}

TEST_CASE("conflicting sample and domain are rejected with the pair") {
  Dataset ds = blobs(12, 12);
  Network init = make_mlp(2, {4}, 3, 19);
  // a huge box covering everything but only accepting class 0
  std::vector<SafetyDomain> domains = {SafetyDomain{
      BoxDomain{Tensor({2}, {-10, -10}), Tensor({2}, {10, 10})}, {0}}};
  TrainConfig cfg;
  CHECK_THROWS_WITH_AS(train(init, ds, domains, cfg),
                       doctest::Contains("domain"), std::invalid_argument);
}

TEST_CASE("empty dataset and empty batches are rejected") {
  Network net = make_mlp(2, {4}, 3, 20);
  Dataset empty;
  empty.input_dim = 2;
  empty.num_classes = 3;
  TrainConfig cfg;
  CHECK_THROWS_AS(train(net, empty, {}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(empirical_risk_grad(net, {}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(net, empty), std::invalid_argument);
}

TEST_CASE("evaluate on a constant net gives the majority-class share") {
  // zero weights, zero bias: all logits equal, argmax breaks to class 0
  Network net(2, 3, {DenseLayer{Tensor({3, 2}), Tensor({3})}});
  Dataset ds = blobs(30, 13);  // balanced thirds
  CHECK(evaluate(net, ds) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("evaluate matches an independent confusion tally") {
  Dataset ds = blobs(50, 14);
  Network net = make_mlp(2, {8}, 3, 21);
  TrainConfig cfg;
  cfg.lambda = 0;
  cfg.min_epochs = 20;
  cfg.max_epochs = 20;
  cfg.learning_rate = 0.1f;
  Network trained = train(net, ds, {}, cfg).net;

  std::vector<std::vector<int>> confusion(3, std::vector<int>(3, 0));
  for (const Sample& s : ds.samples) {
    std::vector<double> z = refmath::forward(trained, s.x);
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (z[std::size_t(k)] > z[std::size_t(best)]) best = k;
    }
    confusion[std::size_t(s.label)][std::size_t(best)]++;
  }
  int diag = confusion[0][0] + confusion[1][1] + confusion[2][2];
  CHECK(evaluate(trained, ds) ==
        doctest::Approx(double(diag) / double(ds.size())).epsilon(1e-9));
  // memorized tiny set reaches 1.0
  Dataset tiny = blobs(6, 15);
  TrainConfig full = cfg;
  full.min_epochs = 300;
  full.max_epochs = 300;
  Network memorized = train(make_mlp(2, {16}, 3, 22), tiny, {}, full).net;
  CHECK(evaluate(memorized, tiny) == doctest::Approx(1.0));
}

TEST_CASE("trainer aborts on numerical blowup with a diagnostic") {
  Dataset ds = blobs(20, 16);
  Network init = make_mlp(2, {6}, 3, 23);
  TrainConfig cfg;
  cfg.learning_rate = 1e30f;
  cfg.grad_clip = 0.0f;  // let it explode
  cfg.min_epochs = 5;
  cfg.max_epochs = 5;
  CHECK_THROWS(train(init, ds, {}, cfg));
}
