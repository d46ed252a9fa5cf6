#pragma once

#include <span>
#include <vector>

#include "safedom/network.hpp"
#include "safedom/tensor.hpp"

namespace safedom {

// Paired elementwise bounds flowing through the interval abstraction of a
// network.
struct IntervalTensor {
  Tensor lower;
  Tensor upper;

  void validate() const;  // same shape, finite, lower <= upper
};

// Axis-aligned input box.
struct BoxDomain {
  Tensor lower;  // rank-1
  Tensor upper;  // rank-1, same length

  void validate() const;
  std::size_t dim() const { return lower.size(); }
  bool contains(const Tensor& x) const;  // closed box, inclusive
  Tensor center() const;
  Tensor radius() const;
  Tensor clamp(const Tensor& x) const;  // project x onto the box

  static BoxDomain degenerate(const Tensor& x);
  // l_inf ball around x, optionally intersected with a valid-range box.
  static BoxDomain ball(const Tensor& x, float epsilon,
                        const BoxDomain* valid_range = nullptr);
};

// A box paired with the labels regarded as acceptable inside it.
struct SafetyDomain {
  BoxDomain box;
  std::vector<int> acceptable;
};

enum class Norm { linf, l2 };

// Distance from a point to a box under the given norm via per-dimension
// clamped residuals; 0 when the point is inside.
double point_box_distance(const Tensor& x, const BoxDomain& box, Norm norm);

// Sound elementwise logit bounds over the box: affine layers propagate in
// center-radius form (c' = W c + b, r' = |W| r), ReLU maps both ends
// through max(., 0).
IntervalTensor propagate(const Network& net, const BoxDomain& box);

// Pointwise specification loss: softmax cross-entropy over the reduced
// logit vector [z_u for unacceptable u..., z_a*] against a* where a* is the
// acceptable class with the largest logit. For a singleton acceptable set
// this is ordinary cross-entropy against that class.
float spec_loss(const Tensor& logits, std::span<const int> acceptable);
int best_acceptable(const Tensor& logits, std::span<const int> acceptable);

// Certified upper bound on the maximum specification loss over the box:
// unacceptable classes at their upper logit bounds against the best
// acceptable lower bound.
float certified_worst_case_loss(const Network& net, const BoxDomain& box,
                                std::span<const int> acceptable);

bool is_certified(const Network& net, const BoxDomain& box,
                  std::span<const int> acceptable, float delta);

// Bound plus its parameter gradient (the bound is a differentiable function
// of the weights through the interval propagation); used by the trainer.
struct CertifiedLoss {
  float bound = 0.0f;
  Gradient grad;
};
CertifiedLoss certified_loss_grad(const Network& net, const BoxDomain& box,
                                  std::span<const int> acceptable);

// Tape-level interval application returning (lower, upper) logit bound vars;
// exposed so the trainer can fuse the bound into a larger objective.
std::pair<ad::Var, ad::Var> apply_network_interval(ad::Tape& tape,
                                                   const Network& net,
                                                   const NetworkVars& vars,
                                                   ad::Var center,
                                                   ad::Var radius);

}  // namespace safedom
