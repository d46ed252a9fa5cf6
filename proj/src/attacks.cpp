#include "safedom/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safedom {

namespace {

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

// Specification loss and its input gradient at a fixed point.
std::pair<float, Tensor> spec_loss_input_grad(const Network& net,
                                              const Tensor& x,
                                              std::span<const int> acceptable) {
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net, /*trainable=*/false);
  ad::Var xv = tape.input(x);
  ad::Var logits = apply_network(tape, net, vars, xv);
  ad::Var wc = tape.worst_case_logits(logits, logits, acceptable);
  ad::Var loss =
      tape.cross_entropy(wc, static_cast<int>(tape.value(wc).size()) - 1);
  tape.backward(loss);
  Tensor g = tape.grad(xv);
  if (g.empty()) g = Tensor::zeros_like(x);
  return {tape.value(loss)[0], std::move(g)};
}

BoxDomain effective_box(const BoxDomain& box,
                        const std::optional<BoxDomain>& clamp) {
  if (!clamp) return box;
  if (clamp->dim() != box.dim()) {
    throw std::invalid_argument("attack: clamp dimension mismatch");
  }
  BoxDomain out = box;
  for (std::size_t i = 0; i < out.dim(); ++i) {
    out.lower[i] = std::max(out.lower[i], clamp->lower[i]);
    out.upper[i] = std::min(out.upper[i], clamp->upper[i]);
    if (out.lower[i] > out.upper[i]) {
      throw std::invalid_argument("attack: box and clamp do not intersect");
    }
  }
  return out;
}

}  // namespace

void AttackConfig::validate() const {
  if (epsilon < 0.0f) throw std::invalid_argument("attack: epsilon < 0");
  if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
  if (norm != Norm::linf) {
    throw std::invalid_argument("attack: only the l_inf norm is supported");
  }
  if (clamp) clamp->validate();
}

Tensor fgsm(const Network& net, const Sample& sample, const AttackConfig& cfg) {
  cfg.validate();
  if (sample.x.size() != net.input_dim()) {
    throw std::invalid_argument("fgsm: input dimension mismatch");
  }
  if (cfg.epsilon == 0.0f) return sample.x;
  const std::vector<int> acceptable = {sample.label};
  auto [loss, grad] = spec_loss_input_grad(net, sample.x, acceptable);
  (void)loss;
  Tensor adv = sample.x;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv[i] += cfg.epsilon * sign(grad[i]);
    if (cfg.clamp) {
      adv[i] = std::min(std::max(adv[i], cfg.clamp->lower[i]),
                        cfg.clamp->upper[i]);
    }
  }
  return adv;
}

PgdResult pgd_in_box(const Network& net, const BoxDomain& box,
                     std::span<const int> acceptable, const AttackConfig& cfg,
                     Rng& rng) {
  cfg.validate();
  box.validate();
  if (box.dim() != net.input_dim()) {
    throw std::invalid_argument("pgd_in_box: box dimension mismatch");
  }
  const BoxDomain feasible = effective_box(box, cfg.clamp);

  Tensor x(std::vector<std::size_t>{feasible.dim()});
  if (cfg.random_init) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform_f(feasible.lower[i], feasible.upper[i]);
    }
  } else {
    x = feasible.center();
  }

  // Per-dimension ascent step; wide dimensions move proportionally faster.
  Tensor step = feasible.radius();
  for (std::size_t i = 0; i < step.size(); ++i) {
    step[i] = cfg.step_size > 0.0f ? cfg.step_size
                                   : 2.5f * step[i] / float(cfg.steps);
  }

  PgdResult best;
  {
    auto [loss, grad] = spec_loss_input_grad(net, x, acceptable);
    best.worst_input = x;
    best.worst_loss = loss;
    for (int it = 0; it < cfg.steps; ++it) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = x[i] + step[i] * sign(grad[i]);
        x[i] = std::min(std::max(x[i], feasible.lower[i]), feasible.upper[i]);
      }
      auto [next_loss, next_grad] = spec_loss_input_grad(net, x, acceptable);
      if (next_loss > best.worst_loss) {
        best.worst_loss = next_loss;
        best.worst_input = x;
      }
      grad = std::move(next_grad);
    }
  }
  return best;
}

std::vector<AttackRecord> attack_dataset(const Network& net,
                                         const Dataset& dataset,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate();
  if (dataset.samples.empty()) {
    throw std::invalid_argument("attack: empty dataset");
  }
  Rng root = Rng(seed).fork(rng_stream::kAttack);
  std::vector<AttackRecord> records;
  records.reserve(dataset.samples.size());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    Rng rng = root.fork(i);
    const BoxDomain ball = BoxDomain::ball(
        s.x, cfg.epsilon, cfg.clamp ? &*cfg.clamp : nullptr);
    const std::vector<int> acceptable = {s.label};
    PgdResult pgd = pgd_in_box(net, ball, acceptable, cfg, rng);

    AttackRecord rec;
    rec.sample_index = i;
    rec.clean_label = s.label;
    rec.loss_before = cross_entropy(forward(net, s.x), s.label);
    rec.loss_after = pgd.worst_loss;
    rec.attacked_label = argmax_class(forward(net, pgd.worst_input));
    rec.success = rec.attacked_label != s.label;
    records.push_back(rec);
  }
  return records;
}

double adversarial_accuracy(const Network& net, const Dataset& dataset,
                            const AttackConfig& cfg, std::uint64_t seed) {
  const std::vector<AttackRecord> records = attack_dataset(net, dataset, cfg, seed);
  std::size_t correct = 0;
  for (const AttackRecord& r : records) {
    if (!r.success) ++correct;
  }
  return double(correct) / double(records.size());
}

}  // namespace safedom
