#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "safedom/autodiff.hpp"
#include "safedom/tensor.hpp"

namespace safedom {

// Layers are value types; a Network is an immutable composition and all
// training steps produce a new Network.

struct DenseLayer {
  Tensor weights;  // [out, in]
  Tensor bias;     // [out]
};

struct Conv1dLayer {
  Tensor kernels;  // [c_out, c_in, kernel_width]
  Tensor bias;     // [c_out]
  int stride = 1;
  int padding = 0;
};

struct ReluLayer {};
struct FlattenLayer {};

using Layer = std::variant<DenseLayer, Conv1dLayer, ReluLayer, FlattenLayer>;

class Network {
 public:
  Network() = default;
  // Validates that consecutive layer shapes compose from input_dim to a
  // rank-1 output of length output_dim and that all parameters are finite.
  Network(std::size_t input_dim, std::size_t output_dim,
          std::vector<Layer> layers);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  // Shape produced by each layer, starting from the (possibly reshaped)
  // network input. Computed once at construction.
  const std::vector<std::vector<std::size_t>>& layer_output_shapes() const {
    return output_shapes_;
  }

  // Copy with the given layer parameters replaced; re-validates.
  Network with_layers(std::vector<Layer> layers) const;

 private:
  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<Layer> layers_;
  std::vector<std::vector<std::size_t>> output_shapes_;
};

struct Sample {
  Tensor x;  // rank-1, length input_dim
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;

  void add(Tensor x, int label);
  void validate() const;  // throws on shape/label/finite violations
  std::size_t size() const { return samples.size(); }
};

// Per-layer parameter gradients, shape-congruent with a Network. Layers
// without parameters keep empty tensors. `input` carries dL/dx when the
// producing call requested it.
struct Gradient {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Tensor input;

  static Gradient zeros_like(const Network& net);
  bool congruent_with(const Network& net) const;
  bool all_finite() const;
  void accumulate(const Gradient& other);         // this += other
  void accumulate_scaled(const Gradient& other, float factor);
  void scale(float factor);
};

// ---- core operations -------------------------------------------------

Tensor forward(const Network& net, const Tensor& x);

float cross_entropy(const Tensor& logits, int target_class);

struct BackwardResult {
  float loss = 0.0f;
  Gradient grad;  // parameters and input
};
BackwardResult backward(const Network& net, const Tensor& x, int label);

// theta' = theta - learning_rate * grad. Rejects non-finite gradients.
Network sgd_step(const Network& net, const Gradient& grad,
                 float learning_rate);

int argmax_class(const Tensor& logits);

// ---- construction helpers --------------------------------------------

// Uniform init in +-sqrt(6 / (fan_in + fan_out)), biases zero.
void glorot_init(Network& net, std::uint64_t seed);

Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                 std::size_t output_dim, std::uint64_t seed);

// ---- autodiff bridge ---------------------------------------------------

// Parameter leaves registered on a tape, aligned with net.layers().
struct NetworkVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

// When trainable is false the parameters are const leaves and backward
// skips their adjoints (input-gradient-only paths such as attacks).
NetworkVars register_network(ad::Tape& tape, const Network& net,
                             bool trainable = true);

// Applies the network to a rank-1 input var, returning the logits var.
ad::Var apply_network(ad::Tape& tape, const Network& net,
                      const NetworkVars& vars, ad::Var x);

// Reads parameter adjoints off the tape after backward(); includes the
// input adjoint when `input` is given.
Gradient collect_gradient(const ad::Tape& tape, const Network& net,
                          const NetworkVars& vars,
                          std::optional<ad::Var> input = std::nullopt);

}  // namespace safedom
