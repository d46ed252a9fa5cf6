#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "safedom/tensor.hpp"

namespace safedom::ad {

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

// Reverse-mode tape over tensor-level primitives. Operations record their
// inputs; backward() walks the tape once in reverse and accumulates adjoints.
// Granularity is one node per layer-sized operation, so tapes stay short
// (a few dozen nodes per network evaluation).
class Tape {
 public:
  Tape() = default;

  // Leaf node holding a value supplied by the caller (parameter or input).
  Var input(Tensor value);
  // Leaf that never receives an adjoint; backward skips work feeding it.
  Var input_const(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  // y = W x  with W:[m,n], x:[n]
  Var matvec(Var w, Var x);
  // y[c_out, t] = sum_{c_in, k} K[c_out, c_in, k] * pad(x)[c_in, t*stride + k]
  // with K:[c_out, c_in, kw], x:[c_in, L], zero padding of `padding` on both ends
  Var conv1d(Var kernels, Var x, int stride, int padding);
  Var add(Var a, Var b);                 // same shape
  Var add_channel_bias(Var x, Var bias); // x:[c,L] + bias:[c] per channel
  Var sub(Var a, Var b);
  Var scale(Var a, float factor);
  Var relu(Var a);
  Var abs(Var a);
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var flatten(Var a);

  // Numerically stable softmax cross-entropy against a class index; scalar.
  Var cross_entropy(Var logits, int target_class);

  // Margin logit vector for a set of acceptable classes: the unacceptable
  // classes' entries from `upper` (ascending index order) followed by the
  // best acceptable entry of `lower`. Cross-entropy of this vector against
  // its last entry bounds the specification loss over the interval.
  Var worst_case_logits(Var lower, Var upper, std::span<const int> acceptable);
  // Acceptable class chosen as the reference by worst_case_logits.
  int worst_case_reference(Var v) const;

  void backward(Var root);

  // Adjoint of v after backward(); empty tensor when v never received one.
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatvec,
    kConv1d,
    kAdd,
    kAddChannelBias,
    kSub,
    kScale,
    kRelu,
    kAbs,
    kReshape,
    kCrossEntropy,
    kWorstCaseLogits,
  };

  struct Node {
    Op op = Op::kLeaf;
    Tensor value;
    std::uint32_t p0 = UINT32_MAX;
    std::uint32_t p1 = UINT32_MAX;
    int aux0 = 0;   // stride / target class / aux list index
    int aux1 = 0;   // padding / chosen reference class
    float faux = 0.0f;
    bool needs_grad = true;
  };

  Var push(Node node);
  Tensor& grad_slot(std::uint32_t id, const Tensor& like);
  void backprop_node(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<std::vector<int>> int_lists_;
};

}  // namespace safedom::ad
