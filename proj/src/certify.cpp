#include "safedom/certify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safedom {

void IntervalTensor::validate() const {
  if (!lower.same_shape(upper)) {
    throw std::invalid_argument("interval: lower/upper shape mismatch");
  }
  require_finite(lower, "interval");
  require_finite(upper, "interval");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] > upper[i]) {
      throw std::invalid_argument("interval: lower > upper at index " +
                                  std::to_string(i));
    }
  }
}

void BoxDomain::validate() const {
  if (lower.rank() != 1 || !lower.same_shape(upper)) {
    throw std::invalid_argument("box: bounds must be equal-length vectors");
  }
  require_finite(lower, "box");
  require_finite(upper, "box");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i] > upper[i]) {
      throw std::invalid_argument("box: lower > upper at index " +
                                  std::to_string(i));
    }
  }
}

bool BoxDomain::contains(const Tensor& x) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  }
  return true;
}

Tensor BoxDomain::center() const {
  Tensor c = Tensor::zeros_like(lower);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] = 0.5f * (lower[i] + upper[i]);
  }
  return c;
}

Tensor BoxDomain::radius() const {
  Tensor r = Tensor::zeros_like(lower);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = 0.5f * (upper[i] - lower[i]);
  }
  return r;
}

Tensor BoxDomain::clamp(const Tensor& x) const {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(std::max(out[i], lower[i]), upper[i]);
  }
  return out;
}

BoxDomain BoxDomain::degenerate(const Tensor& x) { return BoxDomain{x, x}; }

BoxDomain BoxDomain::ball(const Tensor& x, float epsilon,
                          const BoxDomain* valid_range) {
  if (epsilon < 0.0f) throw std::invalid_argument("ball: epsilon < 0");
  BoxDomain box{Tensor::zeros_like(x), Tensor::zeros_like(x)};
  for (std::size_t i = 0; i < x.size(); ++i) {
    box.lower[i] = x[i] - epsilon;
    box.upper[i] = x[i] + epsilon;
    if (valid_range) {
      box.lower[i] = std::max(box.lower[i], valid_range->lower[i]);
      box.upper[i] = std::min(box.upper[i], valid_range->upper[i]);
    }
  }
  box.validate();
  return box;
}

double point_box_distance(const Tensor& x, const BoxDomain& box, Norm norm) {
  if (x.size() != box.dim()) {
    throw std::invalid_argument("point_box_distance: dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double below = double(box.lower[i]) - double(x[i]);
    const double above = double(x[i]) - double(box.upper[i]);
    const double r = std::max({below, above, 0.0});
    if (norm == Norm::linf) {
      acc = std::max(acc, r);
    } else {
      acc += r * r;
    }
  }
  return norm == Norm::linf ? acc : std::sqrt(acc);
}

std::pair<ad::Var, ad::Var> apply_network_interval(ad::Tape& tape,
                                                   const Network& net,
                                                   const NetworkVars& vars,
                                                   ad::Var center,
                                                   ad::Var radius) {
  if (tape.value(center).size() != net.input_dim() ||
      tape.value(radius).size() != net.input_dim()) {
    throw std::invalid_argument(
        "propagate: box dimension " +
        std::to_string(tape.value(center).size()) + " != network input_dim " +
        std::to_string(net.input_dim()));
  }
  ad::Var mu = center;
  ad::Var rad = radius;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& layer = net.layers()[i];
    if (std::get_if<DenseLayer>(&layer)) {
      mu = tape.add(tape.matvec(vars.weights[i], mu), vars.biases[i]);
      rad = tape.matvec(tape.abs(vars.weights[i]), rad);
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      if (tape.value(mu).rank() == 1) {
        mu = tape.reshape(mu, {1, tape.value(mu).size()});
        rad = tape.reshape(rad, {1, tape.value(rad).size()});
      }
      mu = tape.add_channel_bias(
          tape.conv1d(vars.weights[i], mu, conv->stride, conv->padding),
          vars.biases[i]);
      rad = tape.conv1d(tape.abs(vars.weights[i]), rad, conv->stride,
                        conv->padding);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      ad::Var lo = tape.relu(tape.sub(mu, rad));
      ad::Var hi = tape.relu(tape.add(mu, rad));
      mu = tape.scale(tape.add(lo, hi), 0.5f);
      rad = tape.scale(tape.sub(hi, lo), 0.5f);
    } else {
      mu = tape.flatten(mu);
      rad = tape.flatten(rad);
    }
  }
  return {tape.sub(mu, rad), tape.add(mu, rad)};
}

IntervalTensor propagate(const Network& net, const BoxDomain& box) {
  box.validate();
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var center = tape.input(box.center());
  ad::Var radius = tape.input(box.radius());
  auto [lo, hi] = apply_network_interval(tape, net, vars, center, radius);
  IntervalTensor out{tape.value(lo), tape.value(hi)};
  out.validate();
  return out;
}

int best_acceptable(const Tensor& logits, std::span<const int> acceptable) {
  if (acceptable.empty()) {
    throw std::invalid_argument("spec_loss: empty acceptable set");
  }
  int best = -1;
  for (int a : acceptable) {
    if (a < 0 || static_cast<std::size_t>(a) >= logits.size()) {
      throw std::invalid_argument("spec_loss: class index out of range");
    }
    if (best < 0 ||
        logits[static_cast<std::size_t>(a)] >
            logits[static_cast<std::size_t>(best)]) {
      best = a;
    }
  }
  return best;
}

float spec_loss(const Tensor& logits, std::span<const int> acceptable) {
  ad::Tape tape;
  ad::Var z = tape.input(logits);
  ad::Var wc = tape.worst_case_logits(z, z, acceptable);
  ad::Var loss = tape.cross_entropy(
      wc, static_cast<int>(tape.value(wc).size()) - 1);
  return tape.value(loss)[0];
}

float certified_worst_case_loss(const Network& net, const BoxDomain& box,
                                std::span<const int> acceptable) {
  box.validate();
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var center = tape.input(box.center());
  ad::Var radius = tape.input(box.radius());
  auto [lo, hi] = apply_network_interval(tape, net, vars, center, radius);
  ad::Var wc = tape.worst_case_logits(lo, hi, acceptable);
  ad::Var loss = tape.cross_entropy(
      wc, static_cast<int>(tape.value(wc).size()) - 1);
  return tape.value(loss)[0];
}

bool is_certified(const Network& net, const BoxDomain& box,
                  std::span<const int> acceptable, float delta) {
  return certified_worst_case_loss(net, box, acceptable) <= delta;
}

CertifiedLoss certified_loss_grad(const Network& net, const BoxDomain& box,
                                  std::span<const int> acceptable) {
  box.validate();
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var center = tape.input(box.center());
  ad::Var radius = tape.input(box.radius());
  auto [lo, hi] = apply_network_interval(tape, net, vars, center, radius);
  ad::Var wc = tape.worst_case_logits(lo, hi, acceptable);
  ad::Var loss = tape.cross_entropy(
      wc, static_cast<int>(tape.value(wc).size()) - 1);
  tape.backward(loss);
  CertifiedLoss out;
  out.bound = tape.value(loss)[0];
  out.grad = collect_gradient(tape, net, vars);
  return out;
}

}  // namespace safedom
