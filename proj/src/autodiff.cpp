#include "safedom/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace safedom::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

// Output length of a 1-D convolution; throws when the window never fits.
std::size_t conv_out_len(std::size_t in_len, std::size_t kernel, int stride,
                         int padding) {
  const long long padded =
      static_cast<long long>(in_len) + 2LL * padding;
  const long long span = padded - static_cast<long long>(kernel);
  if (span < 0) {
    shape_error("conv1d", "kernel longer than padded input");
  }
  return static_cast<std::size_t>(span / stride) + 1;
}

}  // namespace

Var Tape::push(Node node) {
  if (node.op != Op::kLeaf) {
    bool needs = node.p0 != UINT32_MAX && nodes_[node.p0].needs_grad;
    if (!needs && node.p1 != UINT32_MAX) needs = nodes_[node.p1].needs_grad;
    node.needs_grad = needs;
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input_const(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = false;
  return push(std::move(n));
}

Var Tape::matvec(Var w, Var x) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (W.rank() != 2 || X.rank() != 1 || W.dim(1) != X.dim(0)) {
    shape_error("matvec", "W " + W.shape_str() + " incompatible with x " +
                              X.shape_str());
  }
  const std::size_t m = W.dim(0), nn = W.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const float* row = W.data() + i * nn;
    for (std::size_t j = 0; j < nn; ++j) acc += double(row[j]) * double(X[j]);
    out[i] = static_cast<float>(acc);
  }
  Node n;
  n.op = Op::kMatvec;
  n.value = std::move(out);
  n.p0 = w.id;
  n.p1 = x.id;
  return push(std::move(n));
}

Var Tape::conv1d(Var kernels, Var x, int stride, int padding) {
  const Tensor& K = value(kernels);
  const Tensor& X = value(x);
  if (stride < 1 || padding < 0) shape_error("conv1d", "bad stride/padding");
  if (K.rank() != 3 || X.rank() != 2 || K.dim(1) != X.dim(0)) {
    shape_error("conv1d", "kernels " + K.shape_str() + " incompatible with x " +
                              X.shape_str());
  }
  const std::size_t co = K.dim(0), ci = K.dim(1), kw = K.dim(2);
  const std::size_t L = X.dim(1);
  const std::size_t Lo = conv_out_len(L, kw, stride, padding);
  Tensor out({co, Lo});
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t t = 0; t < Lo; ++t) {
      double acc = 0.0;
      for (std::size_t c = 0; c < ci; ++c) {
        const float* kk = K.data() + (o * ci + c) * kw;
        const float* xx = X.data() + c * L;
        const long long base = static_cast<long long>(t) * stride - padding;
        for (std::size_t k = 0; k < kw; ++k) {
          const long long j = base + static_cast<long long>(k);
          if (j >= 0 && j < static_cast<long long>(L)) {
            acc += double(kk[k]) * double(xx[j]);
          }
        }
      }
      out[o * Lo + t] = static_cast<float>(acc);
    }
  }
  Node n;
  n.op = Op::kConv1d;
  n.value = std::move(out);
  n.p0 = kernels.id;
  n.p1 = x.id;
  n.aux0 = stride;
  n.aux1 = padding;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) {
    shape_error("add", A.shape_str() + " vs " + B.shape_str());
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Node n;
  n.op = Op::kAdd;
  n.value = std::move(out);
  n.p0 = a.id;
  n.p1 = b.id;
  return push(std::move(n));
}

Var Tape::add_channel_bias(Var x, Var bias) {
  const Tensor& X = value(x);
  const Tensor& B = value(bias);
  if (X.rank() != 2 || B.rank() != 1 || X.dim(0) != B.dim(0)) {
    shape_error("add_channel_bias",
                X.shape_str() + " vs bias " + B.shape_str());
  }
  const std::size_t c = X.dim(0), L = X.dim(1);
  Tensor out = X;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t t = 0; t < L; ++t) out[i * L + t] += B[i];
  }
  Node n;
  n.op = Op::kAddChannelBias;
  n.value = std::move(out);
  n.p0 = x.id;
  n.p1 = bias.id;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) {
    shape_error("sub", A.shape_str() + " vs " + B.shape_str());
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  Node n;
  n.op = Op::kSub;
  n.value = std::move(out);
  n.p0 = a.id;
  n.p1 = b.id;
  return push(std::move(n));
}

Var Tape::scale(Var a, float factor) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  Node n;
  n.op = Op::kScale;
  n.value = std::move(out);
  n.p0 = a.id;
  n.faux = factor;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0f);
  Node n;
  n.op = Op::kRelu;
  n.value = std::move(out);
  n.p0 = a.id;
  return push(std::move(n));
}

Var Tape::abs(Var a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
  Node n;
  n.op = Op::kAbs;
  n.value = std::move(out);
  n.p0 = a.id;
  return push(std::move(n));
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
  const Tensor& A = value(a);
  Node n;
  n.op = Op::kReshape;
  n.value = A.reshaped(std::move(shape));
  n.p0 = a.id;
  return push(std::move(n));
}

Var Tape::flatten(Var a) { return reshape(a, {value(a).size()}); }

Var Tape::cross_entropy(Var logits, int target_class) {
  const Tensor& Z = value(logits);
  if (Z.rank() != 1) shape_error("cross_entropy", "logits must be rank-1");
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= Z.size()) {
    std::ostringstream msg;
    msg << "cross_entropy: class " << target_class << " out of range [0, "
        << Z.size() << ")";
    throw std::invalid_argument(msg.str());
  }
  double maxv = Z[0];
  for (std::size_t i = 1; i < Z.size(); ++i) maxv = std::max(maxv, double(Z[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) sum += std::exp(double(Z[i]) - maxv);
  const double loss =
      std::log(sum) + maxv - double(Z[static_cast<std::size_t>(target_class)]);
  Node n;
  n.op = Op::kCrossEntropy;
  n.value = Tensor::scalar(static_cast<float>(loss));
  n.p0 = logits.id;
  n.aux0 = target_class;
  return push(std::move(n));
}

Var Tape::worst_case_logits(Var lower, Var upper,
                            std::span<const int> acceptable) {
  const Tensor& lo = value(lower);
  const Tensor& up = value(upper);
  if (lo.rank() != 1 || !lo.same_shape(up)) {
    shape_error("worst_case_logits", "bounds must be equal-shape vectors");
  }
  const std::size_t n_classes = lo.size();
  if (acceptable.empty()) {
    throw std::invalid_argument("worst_case_logits: empty acceptable set");
  }
  std::vector<char> is_acceptable(n_classes, 0);
  for (int a : acceptable) {
    if (a < 0 || static_cast<std::size_t>(a) >= n_classes) {
      throw std::invalid_argument("worst_case_logits: class index out of range");
    }
    is_acceptable[static_cast<std::size_t>(a)] = 1;
  }
  // Reference = acceptable class with the greatest lower bound (ties to the
  // smallest index, which keeps runs deterministic).
  int ref = -1;
  for (std::size_t i = 0; i < n_classes; ++i) {
    if (is_acceptable[i] && (ref < 0 || lo[i] > lo[static_cast<std::size_t>(ref)])) {
      ref = static_cast<int>(i);
    }
  }
  std::vector<int> unacceptable;
  for (std::size_t i = 0; i < n_classes; ++i) {
    if (!is_acceptable[i]) unacceptable.push_back(static_cast<int>(i));
  }
  Tensor out({unacceptable.size() + 1});
  for (std::size_t j = 0; j < unacceptable.size(); ++j) {
    out[j] = up[static_cast<std::size_t>(unacceptable[j])];
  }
  out[unacceptable.size()] = lo[static_cast<std::size_t>(ref)];

  Node n;
  n.op = Op::kWorstCaseLogits;
  n.value = std::move(out);
  n.p0 = lower.id;
  n.p1 = upper.id;
  n.aux0 = static_cast<int>(int_lists_.size());
  n.aux1 = ref;
  int_lists_.push_back(std::move(unacceptable));
  return push(std::move(n));
}

int Tape::worst_case_reference(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.op != Op::kWorstCaseLogits) {
    throw std::invalid_argument("worst_case_reference: wrong node kind");
  }
  return n.aux1;
}

Tensor& Tape::grad_slot(std::uint32_t id, const Tensor& like) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor::zeros_like(like);
  return g;
}

void Tape::backward(Var root) {
  if (!root.valid() || root.id >= nodes_.size()) {
    throw std::invalid_argument("backward: invalid root");
  }
  grads_.assign(nodes_.size(), Tensor());
  const Tensor& rv = nodes_[root.id].value;
  Tensor seed = Tensor::zeros_like(rv);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = 1.0f;
  grads_[root.id] = std::move(seed);
  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    if (!grads_[id].empty() && nodes_[id].needs_grad) backprop_node(id);
  }
}

const Tensor& Tape::grad(Var v) const { return grads_[v.id]; }

void Tape::backprop_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = grads_[id];
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatvec: {
      const Tensor& W = nodes_[n.p0].value;
      const Tensor& X = nodes_[n.p1].value;
      const std::size_t m = W.dim(0), nn = W.dim(1);
      const bool want_w = nodes_[n.p0].needs_grad;
      const bool want_x = nodes_[n.p1].needs_grad;
      float* gW = want_w ? grad_slot(n.p0, W).data() : nullptr;
      float* gX = want_x ? grad_slot(n.p1, X).data() : nullptr;
      for (std::size_t i = 0; i < m; ++i) {
        const float gi = g[i];
        if (gi == 0.0f) continue;
        const float* wrow = W.data() + i * nn;
        if (want_w) {
          float* gwrow = gW + i * nn;
          for (std::size_t j = 0; j < nn; ++j) gwrow[j] += gi * X[j];
        }
        if (want_x) {
          for (std::size_t j = 0; j < nn; ++j) gX[j] += gi * wrow[j];
        }
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor& K = nodes_[n.p0].value;
      const Tensor& X = nodes_[n.p1].value;
      const std::size_t co = K.dim(0), ci = K.dim(1), kw = K.dim(2);
      const std::size_t L = X.dim(1);
      const std::size_t Lo = n.value.dim(1);
      const int stride = n.aux0, padding = n.aux1;
      const bool want_k = nodes_[n.p0].needs_grad;
      const bool want_x = nodes_[n.p1].needs_grad;
      float* gK = want_k ? grad_slot(n.p0, K).data() : nullptr;
      float* gX = want_x ? grad_slot(n.p1, X).data() : nullptr;
      for (std::size_t o = 0; o < co; ++o) {
        for (std::size_t t = 0; t < Lo; ++t) {
          const float gt = g[o * Lo + t];
          if (gt == 0.0f) continue;
          const long long base =
              static_cast<long long>(t) * stride - padding;
          for (std::size_t c = 0; c < ci; ++c) {
            const float* kk = K.data() + (o * ci + c) * kw;
            const float* xx = X.data() + c * L;
            for (std::size_t k = 0; k < kw; ++k) {
              const long long j = base + static_cast<long long>(k);
              if (j >= 0 && j < static_cast<long long>(L)) {
                if (want_k) gK[(o * ci + c) * kw + k] += gt * xx[j];
                if (want_x) gX[c * L + j] += gt * kk[k];
              }
            }
          }
        }
      }
      break;
    }
    case Op::kAdd: {
      Tensor& ga = grad_slot(n.p0, nodes_[n.p0].value);
      Tensor& gb = grad_slot(n.p1, nodes_[n.p1].value);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::kAddChannelBias: {
      const Tensor& X = nodes_[n.p0].value;
      const std::size_t c = X.dim(0), L = X.dim(1);
      Tensor& gx = grad_slot(n.p0, X);
      Tensor& gb = grad_slot(n.p1, nodes_[n.p1].value);
      for (std::size_t i = 0; i < c; ++i) {
        double acc = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
          gx[i * L + t] += g[i * L + t];
          acc += double(g[i * L + t]);
        }
        gb[i] += static_cast<float>(acc);
      }
      break;
    }
    case Op::kSub: {
      Tensor& ga = grad_slot(n.p0, nodes_[n.p0].value);
      Tensor& gb = grad_slot(n.p1, nodes_[n.p1].value);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::kScale: {
      Tensor& ga = grad_slot(n.p0, nodes_[n.p0].value);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.faux;
      break;
    }
    case Op::kRelu: {
      const Tensor& X = nodes_[n.p0].value;
      Tensor& ga = grad_slot(n.p0, X);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (X[i] > 0.0f) ga[i] += g[i];
      }
      break;
    }
    case Op::kAbs: {
      const Tensor& X = nodes_[n.p0].value;
      Tensor& ga = grad_slot(n.p0, X);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (X[i] > 0.0f) {
          ga[i] += g[i];
        } else if (X[i] < 0.0f) {
          ga[i] -= g[i];
        }
      }
      break;
    }
    case Op::kReshape: {
      Tensor& ga = grad_slot(n.p0, nodes_[n.p0].value);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case Op::kCrossEntropy: {
      const Tensor& Z = nodes_[n.p0].value;
      Tensor& gz = grad_slot(n.p0, Z);
      const float gs = g[0];
      double maxv = Z[0];
      for (std::size_t i = 1; i < Z.size(); ++i) {
        maxv = std::max(maxv, double(Z[i]));
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < Z.size(); ++i) {
        sum += std::exp(double(Z[i]) - maxv);
      }
      for (std::size_t i = 0; i < Z.size(); ++i) {
        const double p = std::exp(double(Z[i]) - maxv) / sum;
        const double onehot =
            (i == static_cast<std::size_t>(n.aux0)) ? 1.0 : 0.0;
        gz[i] += gs * static_cast<float>(p - onehot);
      }
      break;
    }
    case Op::kWorstCaseLogits: {
      const std::vector<int>& unacceptable =
          int_lists_[static_cast<std::size_t>(n.aux0)];
      Tensor& glo = grad_slot(n.p0, nodes_[n.p0].value);
      Tensor& gup = grad_slot(n.p1, nodes_[n.p1].value);
      for (std::size_t j = 0; j < unacceptable.size(); ++j) {
        gup[static_cast<std::size_t>(unacceptable[j])] += g[j];
      }
      glo[static_cast<std::size_t>(n.aux1)] += g[unacceptable.size()];
      break;
    }
  }
}

}  // namespace safedom::ad
