#include "safedom/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "safedom/parallel.hpp"

namespace safedom {

namespace {

constexpr std::size_t kSampleChunk = 16;
constexpr std::size_t kDomainChunk = 4;

bool label_acceptable(int label, std::span<const int> acceptable) {
  return std::find(acceptable.begin(), acceptable.end(), label) !=
         acceptable.end();
}

void check_domains(const Network& net,
                   std::span<const SafetyDomain> domains) {
  for (std::size_t j = 0; j < domains.size(); ++j) {
    const SafetyDomain& d = domains[j];
    d.box.validate();
    if (d.box.dim() != net.input_dim()) {
      throw std::invalid_argument("train: domain " + std::to_string(j) +
                                  " dimension mismatch");
    }
    if (d.acceptable.empty()) {
      throw std::invalid_argument("train: domain " + std::to_string(j) +
                                  " has an empty acceptable set");
    }
    for (int a : d.acceptable) {
      if (a < 0 || static_cast<std::size_t>(a) >= net.output_dim()) {
        throw std::invalid_argument("train: domain " + std::to_string(j) +
                                    " has an out-of-range label");
      }
    }
  }
}

// Non-conflicting data assumption, checked where decidable: a training
// sample lying inside a domain must carry one of its acceptable labels.
void check_conflicts(const Dataset& dataset,
                     std::span<const SafetyDomain> domains) {
  for (std::size_t j = 0; j < domains.size(); ++j) {
    const SafetyDomain& d = domains[j];
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
      const Sample& s = dataset.samples[i];
      if (label_acceptable(s.label, d.acceptable)) continue;
      if (d.box.contains(s.x)) {
        std::ostringstream msg;
        msg << "train: sample " << i << " (label " << s.label
            << ") lies inside domain " << j
            << " whose acceptable set excludes it";
        throw std::invalid_argument(msg.str());
      }
    }
  }
}

double grad_l2_norm(const Gradient& g) {
  double acc = 0.0;
  for (const Tensor& t : g.weights) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      acc += double(t[i]) * double(t[i]);
    }
  }
  for (const Tensor& t : g.biases) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      acc += double(t[i]) * double(t[i]);
    }
  }
  return std::sqrt(acc);
}

BoxDomain scaled_box(const BoxDomain& box, float factor) {
  if (factor >= 1.0f) return box;
  BoxDomain out = box;
  for (std::size_t i = 0; i < box.dim(); ++i) {
    const float c = 0.5f * (box.lower[i] + box.upper[i]);
    const float r = 0.5f * (box.upper[i] - box.lower[i]) * factor;
    out.lower[i] = c - r;
    out.upper[i] = c + r;
  }
  return out;
}

// Loss-at-worst-point gradient for one domain in empirical mode.
std::pair<float, Gradient> empirical_domain_grad(const Network& net,
                                                 const SafetyDomain& domain,
                                                 const AttackConfig& pgd,
                                                 Rng& rng) {
  PgdResult worst = pgd_in_box(net, domain.box, domain.acceptable, pgd, rng);
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var xv = tape.input_const(worst.worst_input);
  ad::Var logits = apply_network(tape, net, vars, xv);
  ad::Var wc = tape.worst_case_logits(logits, logits, domain.acceptable);
  ad::Var loss =
      tape.cross_entropy(wc, static_cast<int>(tape.value(wc).size()) - 1);
  tape.backward(loss);
  return {tape.value(loss)[0], collect_gradient(tape, net, vars)};
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0f) throw std::invalid_argument("train: lambda must be >= 0");
  if (delta <= 0.0f) throw std::invalid_argument("train: delta must be > 0");
  if (batch_train < 1 || batch_safety < 1) {
    throw std::invalid_argument("train: batch sizes must be >= 1");
  }
  if (learning_rate <= 0.0f) {
    throw std::invalid_argument("train: learning_rate must be > 0");
  }
  if (min_epochs < 1) throw std::invalid_argument("train: min_epochs must be >= 1");
  if (max_epochs < min_epochs) {
    throw std::invalid_argument("train: max_epochs must be >= min_epochs");
  }
  if (safety_check_period < 1) {
    throw std::invalid_argument("train: safety_check_period must be >= 1");
  }
  pgd.validate();
}

std::pair<float, Gradient> empirical_risk_grad(const Network& net,
                                               std::span<const Sample> batch) {
  if (batch.empty()) {
    throw std::invalid_argument("empirical_risk_grad: empty batch");
  }
  const std::size_t n = batch.size();
  const std::size_t n_chunks = (n + kSampleChunk - 1) / kSampleChunk;
  std::vector<Gradient> chunk_grads(n_chunks);
  std::vector<double> chunk_losses(n_chunks, 0.0);

  for_each_chunk(n, kSampleChunk, [&](std::size_t c, std::size_t begin,
                                      std::size_t end) {
    ad::Tape tape;
    NetworkVars vars = register_network(tape, net);
    ad::Var total;
    double loss_sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      ad::Var xv = tape.input_const(batch[i].x);
      ad::Var logits = apply_network(tape, net, vars, xv);
      ad::Var loss = tape.cross_entropy(logits, batch[i].label);
      loss_sum += double(tape.value(loss)[0]);
      total = total.valid() ? tape.add(total, loss) : loss;
    }
    ad::Var mean = tape.scale(total, 1.0f / float(n));
    tape.backward(mean);
    chunk_grads[c] = collect_gradient(tape, net, vars);
    chunk_losses[c] = loss_sum;
  });

  Gradient grad = std::move(chunk_grads[0]);
  double loss_sum = chunk_losses[0];
  for (std::size_t c = 1; c < n_chunks; ++c) {
    grad.accumulate(chunk_grads[c]);
    loss_sum += chunk_losses[c];
  }
  return {float(loss_sum / double(n)), std::move(grad)};
}

std::pair<float, Gradient> safety_term_grad(const Network& net,
                                            std::span<const SafetyDomain> batch,
                                            InnerMode mode,
                                            const AttackConfig& pgd, Rng& rng) {
  if (batch.empty()) {
    throw std::invalid_argument("safety_term_grad: empty batch");
  }
  check_domains(net, batch);
  const std::size_t n = batch.size();

  // PGD streams are forked per domain up front so chunked execution stays
  // deterministic.
  std::vector<Rng> streams;
  if (mode == InnerMode::empirical) {
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) streams.push_back(rng.fork(i));
  }

  const std::size_t n_chunks = (n + kDomainChunk - 1) / kDomainChunk;
  std::vector<Gradient> chunk_grads(n_chunks);
  std::vector<double> chunk_losses(n_chunks, 0.0);

  for_each_chunk(n, kDomainChunk, [&](std::size_t c, std::size_t begin,
                                      std::size_t end) {
    Gradient acc = Gradient::zeros_like(net);
    double loss_sum = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      if (mode == InnerMode::certified) {
        CertifiedLoss r =
            certified_loss_grad(net, batch[i].box, batch[i].acceptable);
        loss_sum += double(r.bound);
        acc.accumulate(r.grad);
      } else {
        auto [loss, g] = empirical_domain_grad(net, batch[i], pgd, streams[i]);
        loss_sum += double(loss);
        acc.accumulate(g);
      }
    }
    chunk_grads[c] = std::move(acc);
    chunk_losses[c] = loss_sum;
  });

  Gradient grad = std::move(chunk_grads[0]);
  double loss_sum = chunk_losses[0];
  for (std::size_t c = 1; c < n_chunks; ++c) {
    grad.accumulate(chunk_grads[c]);
    loss_sum += chunk_losses[c];
  }
  grad.scale(1.0f / float(n));
  return {float(loss_sum / double(n)), std::move(grad)};
}

float max_certified_bound(const Network& net,
                          std::span<const SafetyDomain> domains) {
  if (domains.empty()) return 0.0f;
  check_domains(net, domains);
  const std::size_t n = domains.size();
  const std::size_t n_chunks = (n + kDomainChunk - 1) / kDomainChunk;
  std::vector<float> chunk_max(n_chunks, -std::numeric_limits<float>::infinity());
  for_each_chunk(n, kDomainChunk, [&](std::size_t c, std::size_t begin,
                                      std::size_t end) {
    float m = -std::numeric_limits<float>::infinity();
    for (std::size_t i = begin; i < end; ++i) {
      m = std::max(m, certified_worst_case_loss(net, domains[i].box,
                                                domains[i].acceptable));
    }
    chunk_max[c] = m;
  });
  return *std::max_element(chunk_max.begin(), chunk_max.end());
}

TrainResult train(const Network& net, const Dataset& dataset,
                  const std::vector<SafetyDomain>& domains,
                  const TrainConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.samples.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (dataset.input_dim != net.input_dim() ||
      dataset.num_classes != net.output_dim()) {
    throw std::invalid_argument("train: dataset does not match network dims");
  }
  check_domains(net, domains);
  check_conflicts(dataset, domains);

  Rng root(cfg.seed);
  Rng data_rng = root.fork(rng_stream::kDataShuffle);
  Rng domain_rng = root.fork(rng_stream::kDomainShuffle);
  Rng attack_rng = root.fork(rng_stream::kAttack);

  const bool use_safety = cfg.lambda > 0.0f && !domains.empty();
  const std::size_t n = dataset.samples.size();
  const std::size_t k = domains.size();

  std::vector<std::size_t> sample_order(n);
  std::iota(sample_order.begin(), sample_order.end(), std::size_t{0});
  std::vector<std::size_t> domain_order(k);
  std::iota(domain_order.begin(), domain_order.end(), std::size_t{0});
  std::size_t domain_cursor = k;  // forces a shuffle on first draw

  Network current = net;
  TrainReport report;
  float safety_bound = domains.empty()
                           ? 0.0f
                           : std::numeric_limits<float>::infinity();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    data_rng.shuffle(sample_order);
    if (use_safety) {
      domain_rng.shuffle(domain_order);
      domain_cursor = 0;
    }
    const float ramp =
        cfg.safety_ramp_epochs > 0
            ? std::min(1.0f, float(epoch) / float(cfg.safety_ramp_epochs))
            : 1.0f;

    double loss_acc = 0.0;
    double safety_acc = 0.0;
    std::size_t safety_draws = 0;

    for (std::size_t start = 0; start < n; start += cfg.batch_train) {
      const std::size_t stop =
          std::min(start + static_cast<std::size_t>(cfg.batch_train), n);
      std::vector<Sample> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(dataset.samples[sample_order[i]]);
      }
      auto [erm_loss, grad] = empirical_risk_grad(current, batch);
      loss_acc += double(erm_loss) * double(batch.size());

      if (use_safety) {
        const std::size_t draw =
            std::min(static_cast<std::size_t>(cfg.batch_safety), k);
        std::vector<SafetyDomain> safety_batch;
        safety_batch.reserve(draw);
        for (std::size_t d = 0; d < draw; ++d) {
          if (domain_cursor >= k) {
            domain_rng.shuffle(domain_order);
            domain_cursor = 0;
          }
          const SafetyDomain& src = domains[domain_order[domain_cursor++]];
          safety_batch.push_back(
              SafetyDomain{scaled_box(src.box, ramp), src.acceptable});
        }
        auto [safety_loss, safety_grad] =
            safety_term_grad(current, safety_batch, cfg.inner_mode, cfg.pgd,
                             attack_rng);
        if (!std::isfinite(safety_loss)) {
          throw std::runtime_error("train: non-finite safety term at epoch " +
                                   std::to_string(epoch));
        }
        safety_acc += double(safety_loss);
        ++safety_draws;
        grad.accumulate_scaled(safety_grad, cfg.lambda);
      }
      if (!std::isfinite(erm_loss)) {
        throw std::runtime_error("train: non-finite training loss at epoch " +
                                 std::to_string(epoch));
      }

      if (cfg.grad_clip > 0.0f) {
        const double norm = grad_l2_norm(grad);
        if (norm > double(cfg.grad_clip)) {
          grad.scale(float(double(cfg.grad_clip) / norm));
        }
      }
      current = sgd_step(current, grad, cfg.learning_rate);
    }

    EpochStats stats;
    stats.train_loss = float(loss_acc / double(n));
    stats.safety_term =
        safety_draws > 0 ? float(safety_acc / double(safety_draws)) : 0.0f;

    const bool sweep_now =
        (epoch % cfg.safety_check_period == 0) || (epoch == cfg.max_epochs);
    if (sweep_now) {
      safety_bound = max_certified_bound(current, domains);
      stats.certified_bound = safety_bound;
    }
    report.trace.push_back(stats);
    report.epochs_run = epoch;
    report.final_train_loss = stats.train_loss;
    report.final_safety_term = stats.safety_term;

    if (sweep_now && epoch >= cfg.min_epochs && safety_bound <= cfg.delta) {
      break;
    }
  }

  report.final_safety_bound = safety_bound;
  report.converged = safety_bound <= cfg.delta;
  report.final_objective =
      report.final_train_loss + cfg.lambda * report.final_safety_term;
  return TrainResult{std::move(current), std::move(report)};
}

double evaluate(const Network& net, const Dataset& dataset) {
  if (dataset.samples.empty()) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  std::size_t correct = 0;
  for (const Sample& s : dataset.samples) {
    if (argmax_class(forward(net, s.x)) == s.label) ++correct;
  }
  return double(correct) / double(dataset.samples.size());
}

}  // namespace safedom
