#include "safedom/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "safedom/rng.hpp"

namespace safedom {

namespace {

std::size_t conv_out_len(std::size_t in_len, std::size_t kernel, int stride,
                         int padding) {
  const long long span = static_cast<long long>(in_len) + 2LL * padding -
                         static_cast<long long>(kernel);
  if (span < 0) {
    throw std::invalid_argument("conv1d layer: kernel longer than padded input");
  }
  return static_cast<std::size_t>(span / stride) + 1;
}

[[noreturn]] void compose_error(std::size_t layer_idx, const std::string& why) {
  std::ostringstream msg;
  msg << "network: layer " << layer_idx << " does not compose: " << why;
  throw std::invalid_argument(msg.str());
}

std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << ", ";
    out << s[i];
  }
  out << "]";
  return out.str();
}

}  // namespace

Network::Network(std::size_t input_dim, std::size_t output_dim,
                 std::vector<Layer> layers)
    : input_dim_(input_dim), output_dim_(output_dim), layers_(std::move(layers)) {
  if (input_dim_ == 0 || output_dim_ == 0) {
    throw std::invalid_argument("network: input_dim/output_dim must be positive");
  }
  std::vector<std::size_t> shape = {input_dim_};
  output_shapes_.clear();
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (dense->weights.rank() != 2 || dense->bias.rank() != 1) {
        compose_error(li, "dense parameters must be [out,in] and [out]");
      }
      const std::size_t out = dense->weights.dim(0);
      const std::size_t in = dense->weights.dim(1);
      if (dense->bias.dim(0) != out) compose_error(li, "dense bias length");
      if (shape.size() != 1 || shape[0] != in) {
        compose_error(li, "dense expects rank-1 input of length " +
                              std::to_string(in) + ", got " + shape_str(shape));
      }
      require_finite(dense->weights, "network");
      require_finite(dense->bias, "network");
      shape = {out};
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      if (conv->kernels.rank() != 3 || conv->bias.rank() != 1) {
        compose_error(li, "conv1d parameters must be [co,ci,k] and [co]");
      }
      if (conv->stride < 1) compose_error(li, "conv1d stride must be positive");
      if (conv->padding < 0) compose_error(li, "conv1d padding must be >= 0");
      const std::size_t co = conv->kernels.dim(0);
      const std::size_t ci = conv->kernels.dim(1);
      const std::size_t kw = conv->kernels.dim(2);
      if (conv->bias.dim(0) != co) compose_error(li, "conv1d bias length");
      // A rank-1 input feeds a single-channel convolution.
      std::size_t in_ci = 0, in_len = 0;
      if (shape.size() == 1 && ci == 1) {
        in_ci = 1;
        in_len = shape[0];
      } else if (shape.size() == 2) {
        in_ci = shape[0];
        in_len = shape[1];
      } else {
        compose_error(li, "conv1d expects [c,L] input, got " + shape_str(shape));
      }
      if (in_ci != ci) {
        compose_error(li, "conv1d channel mismatch: input has " +
                              std::to_string(in_ci) + ", kernels expect " +
                              std::to_string(ci));
      }
      require_finite(conv->kernels, "network");
      require_finite(conv->bias, "network");
      shape = {co, conv_out_len(in_len, kw, conv->stride, conv->padding)};
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      shape = {shape_product(shape)};
    }  // ReLU keeps the shape
    output_shapes_.push_back(shape);
  }
  if (shape.size() != 1 || shape[0] != output_dim_) {
    throw std::invalid_argument(
        "network: final layer produces " + shape_str(shape) +
        ", expected rank-1 of length " + std::to_string(output_dim_));
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      n += dense->weights.size() + dense->bias.size();
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      n += conv->kernels.size() + conv->bias.size();
    }
  }
  return n;
}

Network Network::with_layers(std::vector<Layer> layers) const {
  return Network(input_dim_, output_dim_, std::move(layers));
}

void Dataset::add(Tensor x, int label) {
  if (x.rank() != 1 || x.dim(0) != input_dim) {
    throw std::invalid_argument("dataset: sample has wrong input_dim");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
    throw std::invalid_argument("dataset: label out of range");
  }
  require_finite(x, "dataset");
  samples.push_back(Sample{std::move(x), label});
}

void Dataset::validate() const {
  for (const Sample& s : samples) {
    if (s.x.rank() != 1 || s.x.dim(0) != input_dim) {
      throw std::invalid_argument("dataset: sample has wrong input_dim");
    }
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes) {
      throw std::invalid_argument("dataset: label out of range");
    }
    require_finite(s.x, "dataset");
  }
}

Gradient Gradient::zeros_like(const Network& net) {
  Gradient g;
  g.weights.reserve(net.layers().size());
  g.biases.reserve(net.layers().size());
  for (const Layer& layer : net.layers()) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      g.weights.push_back(Tensor::zeros_like(dense->weights));
      g.biases.push_back(Tensor::zeros_like(dense->bias));
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      g.weights.push_back(Tensor::zeros_like(conv->kernels));
      g.biases.push_back(Tensor::zeros_like(conv->bias));
    } else {
      g.weights.emplace_back();
      g.biases.emplace_back();
    }
  }
  return g;
}

bool Gradient::congruent_with(const Network& net) const {
  if (weights.size() != net.layers().size() ||
      biases.size() != net.layers().size()) {
    return false;
  }
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& layer = net.layers()[i];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (!weights[i].same_shape(dense->weights)) return false;
      if (!biases[i].same_shape(dense->bias)) return false;
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      if (!weights[i].same_shape(conv->kernels)) return false;
      if (!biases[i].same_shape(conv->bias)) return false;
    } else {
      if (!weights[i].empty() || !biases[i].empty()) return false;
    }
  }
  return true;
}

bool Gradient::all_finite() const {
  for (const Tensor& t : weights) {
    if (!t.all_finite()) return false;
  }
  for (const Tensor& t : biases) {
    if (!t.all_finite()) return false;
  }
  return input.all_finite();
}

void Gradient::accumulate(const Gradient& other) {
  accumulate_scaled(other, 1.0f);
}

void Gradient::accumulate_scaled(const Gradient& other, float factor) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < weights[i].size(); ++j) {
      weights[i][j] += factor * other.weights[i][j];
    }
    for (std::size_t j = 0; j < biases[i].size(); ++j) {
      biases[i][j] += factor * other.biases[i][j];
    }
  }
  if (!input.empty() && !other.input.empty()) {
    for (std::size_t j = 0; j < input.size(); ++j) {
      input[j] += factor * other.input[j];
    }
  }
}

void Gradient::scale(float factor) {
  for (Tensor& t : weights) {
    for (std::size_t j = 0; j < t.size(); ++j) t[j] *= factor;
  }
  for (Tensor& t : biases) {
    for (std::size_t j = 0; j < t.size(); ++j) t[j] *= factor;
  }
  for (std::size_t j = 0; j < input.size(); ++j) input[j] *= factor;
}

NetworkVars register_network(ad::Tape& tape, const Network& net,
                             bool trainable) {
  NetworkVars vars;
  vars.weights.resize(net.layers().size());
  vars.biases.resize(net.layers().size());
  auto leaf = [&](const Tensor& t) {
    return trainable ? tape.input(t) : tape.input_const(t);
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& layer = net.layers()[i];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      vars.weights[i] = leaf(dense->weights);
      vars.biases[i] = leaf(dense->bias);
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      vars.weights[i] = leaf(conv->kernels);
      vars.biases[i] = leaf(conv->bias);
    }
  }
  return vars;
}

ad::Var apply_network(ad::Tape& tape, const Network& net,
                      const NetworkVars& vars, ad::Var x) {
  if (tape.value(x).size() != net.input_dim()) {
    throw std::invalid_argument(
        "forward: input has length " +
        std::to_string(tape.value(x).size()) + ", network expects " +
        std::to_string(net.input_dim()));
  }
  ad::Var h = x;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const Layer& layer = net.layers()[i];
    if (std::get_if<DenseLayer>(&layer)) {
      h = tape.add(tape.matvec(vars.weights[i], h), vars.biases[i]);
    } else if (const auto* conv = std::get_if<Conv1dLayer>(&layer)) {
      if (tape.value(h).rank() == 1) {
        h = tape.reshape(h, {1, tape.value(h).size()});
      }
      h = tape.add_channel_bias(
          tape.conv1d(vars.weights[i], h, conv->stride, conv->padding),
          vars.biases[i]);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      h = tape.relu(h);
    } else {
      h = tape.flatten(h);
    }
  }
  return h;
}

Gradient collect_gradient(const ad::Tape& tape, const Network& net,
                          const NetworkVars& vars,
                          std::optional<ad::Var> input) {
  Gradient g = Gradient::zeros_like(net);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (vars.weights[i].valid()) {
      const Tensor& gw = tape.grad(vars.weights[i]);
      if (!gw.empty()) g.weights[i] = gw;
      const Tensor& gb = tape.grad(vars.biases[i]);
      if (!gb.empty()) g.biases[i] = gb;
    }
  }
  if (input) {
    const Tensor& gx = tape.grad(*input);
    g.input = gx.empty() ? Tensor::zeros_like(tape.value(*input)) : gx;
  }
  return g;
}

Tensor forward(const Network& net, const Tensor& x) {
  if (x.rank() != 1 || x.dim(0) != net.input_dim()) {
    throw std::invalid_argument("forward: input has shape " + x.shape_str() +
                                ", network expects [" +
                                std::to_string(net.input_dim()) + "]");
  }
  require_finite(x, "forward");
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var logits = apply_network(tape, net, vars, tape.input(x));
  Tensor out = tape.value(logits);
  require_finite(out, "forward output");
  return out;
}

float cross_entropy(const Tensor& logits, int target_class) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("cross_entropy: logits must be rank-1");
  }
  require_finite(logits, "cross_entropy");
  ad::Tape tape;
  ad::Var loss = tape.cross_entropy(tape.input(logits), target_class);
  return tape.value(loss)[0];
}

BackwardResult backward(const Network& net, const Tensor& x, int label) {
  require_finite(x, "backward");
  ad::Tape tape;
  NetworkVars vars = register_network(tape, net);
  ad::Var xv = tape.input(x);
  ad::Var logits = apply_network(tape, net, vars, xv);
  ad::Var loss = tape.cross_entropy(logits, label);
  tape.backward(loss);
  BackwardResult result;
  result.loss = tape.value(loss)[0];
  result.grad = collect_gradient(tape, net, vars, xv);
  return result;
}

Network sgd_step(const Network& net, const Gradient& grad,
                 float learning_rate) {
  if (!grad.congruent_with(net)) {
    throw std::invalid_argument("sgd_step: gradient not congruent with network");
  }
  if (!grad.all_finite()) {
    throw std::invalid_argument("sgd_step: non-finite gradient");
  }
  std::vector<Layer> layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto* dense = std::get_if<DenseLayer>(&layers[i])) {
      for (std::size_t j = 0; j < dense->weights.size(); ++j) {
        dense->weights[j] -= learning_rate * grad.weights[i][j];
      }
      for (std::size_t j = 0; j < dense->bias.size(); ++j) {
        dense->bias[j] -= learning_rate * grad.biases[i][j];
      }
    } else if (auto* conv = std::get_if<Conv1dLayer>(&layers[i])) {
      for (std::size_t j = 0; j < conv->kernels.size(); ++j) {
        conv->kernels[j] -= learning_rate * grad.weights[i][j];
      }
      for (std::size_t j = 0; j < conv->bias.size(); ++j) {
        conv->bias[j] -= learning_rate * grad.biases[i][j];
      }
    }
  }
  return net.with_layers(std::move(layers));
}

int argmax_class(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

void glorot_init(Network& net, std::uint64_t seed) {
  std::vector<Layer> layers = net.layers();
  Rng root(seed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Rng rng = root.fork(i + 1);
    if (auto* dense = std::get_if<DenseLayer>(&layers[i])) {
      const double fan_in = double(dense->weights.dim(1));
      const double fan_out = double(dense->weights.dim(0));
      const float limit = float(std::sqrt(6.0 / (fan_in + fan_out)));
      for (std::size_t j = 0; j < dense->weights.size(); ++j) {
        dense->weights[j] = rng.uniform_f(-limit, limit);
      }
      for (std::size_t j = 0; j < dense->bias.size(); ++j) {
        dense->bias[j] = 0.0f;
      }
    } else if (auto* conv = std::get_if<Conv1dLayer>(&layers[i])) {
      const double kw = double(conv->kernels.dim(2));
      const double fan_in = double(conv->kernels.dim(1)) * kw;
      const double fan_out = double(conv->kernels.dim(0)) * kw;
      const float limit = float(std::sqrt(6.0 / (fan_in + fan_out)));
      for (std::size_t j = 0; j < conv->kernels.size(); ++j) {
        conv->kernels[j] = rng.uniform_f(-limit, limit);
      }
      for (std::size_t j = 0; j < conv->bias.size(); ++j) {
        conv->bias[j] = 0.0f;
      }
    }
  }
  net = net.with_layers(std::move(layers));
}

Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                 std::size_t output_dim, std::uint64_t seed) {
  std::vector<Layer> layers;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    layers.push_back(DenseLayer{Tensor({h, in}), Tensor({h})});
    layers.push_back(ReluLayer{});
    in = h;
  }
  layers.push_back(DenseLayer{Tensor({output_dim, in}), Tensor({output_dim})});
  Network net(input_dim, output_dim, std::move(layers));
  glorot_init(net, seed);
  return net;
}

}  // namespace safedom
