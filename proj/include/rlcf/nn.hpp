#pragma once

// Small dense feed-forward networks with reverse-mode gradients, Adam/SGD
// updates and target-network tracking. Batches are column-major: one sample
// per column.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rlcf/stochastic.hpp"

namespace rlcf::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { identity, relu, tanh };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Eigen::Index output_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
};

struct LayerGradient {
  Matrix weights;
  Vector bias;
};

/// Gradients shaped like the network they belong to.
struct GradientSet {
  std::vector<LayerGradient> layers;

  static GradientSet zeros_like(const MlpParams& net) {
    GradientSet g;
    for (const auto& l : net.layers) {
      g.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
    }
    return g;
  }
};

inline bool same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weights.rows() != b.layers[i].weights.rows() ||
        a.layers[i].weights.cols() != b.layers[i].weights.cols() ||
        a.layers[i].activation != b.layers[i].activation) {
      return false;
    }
  }
  return true;
}

/// Hidden layers use `hidden_activation`; the last layer uses `head`. Weights
/// are uniform in +-1/sqrt(fan_in), except the final layer which is uniform in
/// +-final_range when final_range > 0.
inline MlpParams make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim,
                          Activation head, RandomStream& rng, double final_range = 0.0,
                          Activation hidden_activation = Activation::relu) {
  if (input_dim <= 0 || output_dim <= 0) throw std::invalid_argument("make_mlp: bad dimensions");
  MlpParams net;
  int in = input_dim;
  std::vector<int> dims = hidden;
  dims.push_back(output_dim);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const bool last = i + 1 == dims.size();
    const int out = dims[i];
    if (out <= 0) throw std::invalid_argument("make_mlp: bad hidden width");
    const double r = (last && final_range > 0.0) ? final_range : 1.0 / std::sqrt(double(in));
    DenseLayer l;
    l.weights.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
      for (Eigen::Index j = 0; j < l.weights.rows(); ++j) l.weights(j, c) = rng.uniform(-r, r);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = rng.uniform(-r, r);
    l.activation = last ? head : hidden_activation;
    net.layers.push_back(std::move(l));
    in = out;
  }
  return net;
}

namespace detail {

inline void apply_activation(Matrix& z, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

}  // namespace detail

/// Per-layer outputs of a forward pass, needed for backpropagation.
/// outputs[0] is the input batch; outputs[i + 1] is the activation of layer i.
struct ForwardCache {
  std::vector<Matrix> outputs;

  const Matrix& result() const { return outputs.back(); }
};

inline ForwardCache forward_cached(const MlpParams& net, const Matrix& inputs) {
  if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
  if (inputs.rows() != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(inputs.rows()) +
                                " rows, network expects " + std::to_string(net.input_dim()));
  }
  ForwardCache cache;
  cache.outputs.reserve(net.layers.size() + 1);
  cache.outputs.push_back(inputs);
  for (const auto& l : net.layers) {
    Matrix z = l.weights * cache.outputs.back();
    z.colwise() += l.bias;
    detail::apply_activation(z, l.activation);
    cache.outputs.push_back(std::move(z));
  }
  return cache;
}

inline Matrix forward_batch(const MlpParams& net, const Matrix& inputs) {
  if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
  if (inputs.rows() != net.input_dim()) throw std::invalid_argument("forward: dimension mismatch");
  Matrix x = inputs;
  for (const auto& l : net.layers) {
    Matrix z = l.weights * x;
    z.colwise() += l.bias;
    detail::apply_activation(z, l.activation);
    x = std::move(z);
  }
  return x;
}

inline Vector forward(const MlpParams& net, const Vector& input) {
  return forward_batch(net, input);
}

/// Small-input fast path used inside rollouts.
inline double forward_scalar(const MlpParams& net, const double* input, Eigen::Index n) {
  return forward_batch(net, Eigen::Map<const Matrix>(input, n, 1))(0, 0);
}

struct Backprop {
  GradientSet grads;
  Matrix input_grad;  // d(output . upstream)/d(input), same shape as the input batch
};

/// Reverse-mode pass. `upstream` holds dL/d(output) per sample (out_dim x N);
/// parameter gradients are summed over the batch.
inline Backprop backward(const MlpParams& net, const ForwardCache& cache, const Matrix& upstream) {
  if (upstream.rows() != net.output_dim() || upstream.cols() != cache.result().cols()) {
    throw std::invalid_argument("backward: upstream shape mismatch");
  }
  Backprop bp;
  bp.grads.layers.resize(net.layers.size());
  Matrix delta = upstream;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& l = net.layers[li];
    const Matrix& out = cache.outputs[li + 1];
    switch (l.activation) {
      case Activation::identity: break;
      case Activation::relu: delta = delta.cwiseProduct((out.array() > 0.0).cast<double>().matrix()); break;
      case Activation::tanh: delta = delta.cwiseProduct((1.0 - out.array().square()).matrix()); break;
    }
    bp.grads.layers[li].weights.noalias() = delta * cache.outputs[li].transpose();
    bp.grads.layers[li].bias = delta.rowwise().sum();
    Matrix next = l.weights.transpose() * delta;
    delta = std::move(next);
  }
  bp.input_grad = std::move(delta);
  return bp;
}

/// Single-sample critic gradient for a scalar upstream derivative.
inline Backprop backward_critic(const MlpParams& net, const Vector& input, double upstream) {
  const ForwardCache cache = forward_cached(net, input);
  return backward(net, cache, Matrix::Constant(1, 1, upstream));
}

/// target <- tau * main + (1 - tau) * target, in place.
inline void soft_update_inplace(MlpParams& target, const MlpParams& main, double tau) {
  if (!same_shape(target, main)) throw std::invalid_argument("soft_update: shape mismatch");
  if (tau == 0.0) return;
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& m = main.layers[i];
    if (tau == 1.0) {
      t.weights = m.weights;
      t.bias = m.bias;
    } else {
      t.weights = tau * m.weights + (1.0 - tau) * t.weights;
      t.bias = tau * m.bias + (1.0 - tau) * t.bias;
    }
  }
}

inline MlpParams soft_update(MlpParams target, const MlpParams& main, double tau) {
  soft_update_inplace(target, main, tau);
  return target;
}

inline void sgd_step(MlpParams& net, const GradientSet& g, double lr) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    net.layers[i].weights -= lr * g.layers[i].weights;
    net.layers[i].bias -= lr * g.layers[i].bias;
  }
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  GradientSet m;
  GradientSet v;

  static AdamState for_net(const MlpParams& net) {
    AdamState s;
    s.m = GradientSet::zeros_like(net);
    s.v = GradientSet::zeros_like(net);
    return s;
  }
};

inline void adam_step(MlpParams& net, const GradientSet& g, double lr, AdamState& s) {
  if (s.m.layers.size() != net.layers.size()) s = AdamState::for_net(net);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].weights, g.layers[i].weights, s.m.layers[i].weights, s.v.layers[i].weights);
    update(net.layers[i].bias, g.layers[i].bias, s.m.layers[i].bias, s.v.layers[i].bias);
  }
}

inline bool all_finite(const MlpParams& net) {
  for (const auto& l : net.layers) {
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

inline double max_abs(const MlpParams& net) {
  double m = 0.0;
  for (const auto& l : net.layers) {
    m = std::max(m, l.weights.cwiseAbs().maxCoeff());
    m = std::max(m, l.bias.cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace rlcf::nn
