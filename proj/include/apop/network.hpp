#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "apop/activation.hpp"
#include "apop/common.hpp"

namespace apop {

/// One dense layer. `weights` is out x (in + 1); the last column is the bias,
/// so a neuron's incoming weight vector is a full row, bias included.
struct Layer {
  Matrix weights;
  ActivationKind activation = ActivationKind::Sigmoid;

  Index out() const { return weights.rows(); }
  Index in() const { return weights.cols() - 1; }
};

/// Feedforward network: an ordered chain of dense layers. A neuron's outgoing
/// weights are the matching column of the next layer (bias column excluded).
struct Network {
  std::vector<Layer> layers;

  Index input_dim() const { return layers.front().in(); }
  Index output_dim() const { return layers.back().out(); }
  std::size_t depth() const { return layers.size(); }

  // Structural checks only (cheap; run per pass).
  void check_shape() const {
    if (layers.size() < 2) throw ShapeError("network needs at least 2 layers (one hidden)");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Layer& lay = layers[l];
      if (lay.out() < 1 || lay.in() < 1)
        throw ShapeError("layer " + std::to_string(l) + " has empty dimensions");
      if (l + 1 < layers.size() && layers[l + 1].in() != lay.out())
        throw ShapeError("layer " + std::to_string(l) + " out=" + std::to_string(lay.out()) +
                         " does not feed layer " + std::to_string(l + 1) +
                         " in=" + std::to_string(layers[l + 1].in()));
      if (l + 1 < layers.size() && lay.activation == ActivationKind::Linear)
        throw ShapeError("linear activation is only permitted on the output layer");
    }
  }

  // Full validation, including entry finiteness. Run on load/creation.
  void validate() const {
    check_shape();
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (!layers[l].weights.allFinite())
        throw ShapeError("layer " + std::to_string(l) + " holds non-finite weights");
  }
};

/// Cached per-layer pre- and post-activations of one forward pass.
struct BatchActivations {
  Matrix input;               // B x in
  std::vector<Matrix> pre;    // B x out_l
  std::vector<Matrix> post;   // B x out_l

  Index batch() const { return input.rows(); }
};

/// Per-layer gradients of the mean loss over a batch, same shapes as the
/// layer weight matrices, plus the loss value itself.
struct Gradients {
  std::vector<Matrix> layer;
  double loss = 0.0;
};

enum class LossKind { Mse, SoftmaxCrossEntropy, SigmoidBinaryCrossEntropy };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::SoftmaxCrossEntropy: return "softmax_ce";
    case LossKind::SigmoidBinaryCrossEntropy: return "sigmoid_bce";
  }
  return "?";
}

inline LossKind loss_from_name(const std::string& name) {
  if (name == "mse") return LossKind::Mse;
  if (name == "softmax_ce") return LossKind::SoftmaxCrossEntropy;
  if (name == "sigmoid_bce") return LossKind::SigmoidBinaryCrossEntropy;
  throw ConfigError("unknown loss '" + name + "' (expected mse, softmax_ce or sigmoid_bce)");
}

inline std::int64_t param_count(const Network& net) {
  std::int64_t total = 0;
  for (const Layer& lay : net.layers) total += lay.weights.size();
  return total;
}

inline Matrix apply_activation(ActivationKind kind, const Matrix& z) {
  if (kind == ActivationKind::Relu) return z.cwiseMax(0.0);
  if (kind == ActivationKind::Linear) return z;
  return z.unaryExpr([](double v) { return activate(ActivationKind::Sigmoid, v); });
}

inline Matrix activation_derivative_matrix(ActivationKind kind, const Matrix& z, const Matrix& a) {
  switch (kind) {
    case ActivationKind::Sigmoid:
      return (a.array() * (1.0 - a.array())).matrix();
    case ActivationKind::Relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case ActivationKind::Linear:
      return Matrix::Ones(z.rows(), z.cols());
  }
  throw ContractError("unknown activation kind");
}

inline BatchActivations forward(const Network& net, const Matrix& batch) {
  net.check_shape();
  if (batch.cols() != net.input_dim())
    throw ShapeError("batch width " + std::to_string(batch.cols()) + " does not match network input " +
                     std::to_string(net.input_dim()));
  if (batch.rows() < 1) throw ShapeError("empty batch");

  BatchActivations acts;
  acts.input = batch;
  acts.pre.reserve(net.depth());
  acts.post.reserve(net.depth());
  const Matrix* prev = &acts.input;
  for (const Layer& lay : net.layers) {
    const Index in = lay.in();
    Matrix z = (*prev) * lay.weights.leftCols(in).transpose();
    z.rowwise() += lay.weights.col(in).transpose();
    acts.post.push_back(apply_activation(lay.activation, z));
    acts.pre.push_back(std::move(z));
    prev = &acts.post.back();
  }
  return acts;
}

namespace detail {

// Output-layer delta (dLoss/dPreActivation, batch mean) plus the loss value.
inline std::pair<Matrix, double> loss_delta(const Network& net, const BatchActivations& acts,
                                            const Matrix& targets, LossKind loss) {
  const Matrix& z = acts.pre.back();
  const Matrix& a = acts.post.back();
  const double b = static_cast<double>(acts.batch());
  if (targets.rows() != acts.batch() || targets.cols() != a.cols())
    throw ShapeError("targets " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
                     " do not match output " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));

  switch (loss) {
    case LossKind::Mse: {
      Matrix residual = a - targets;
      const double value = residual.squaredNorm() / b;
      Matrix delta = (2.0 / b) *
                     residual.cwiseProduct(activation_derivative_matrix(net.layers.back().activation, z, a));
      return {std::move(delta), value};
    }
    case LossKind::SoftmaxCrossEntropy: {
      if (net.layers.back().activation != ActivationKind::Linear)
        throw ContractError("softmax cross-entropy requires a linear output layer");
      Vector zmax = z.rowwise().maxCoeff();
      Matrix shifted = z.colwise() - zmax;
      Vector lse = shifted.array().exp().rowwise().sum().log().matrix() + zmax;
      Matrix probs = (shifted.colwise() - (lse - zmax)).array().exp().matrix();
      Vector tsum = targets.rowwise().sum();
      double value = (targets.array() * ((-shifted).colwise() + (lse - zmax)).array()).sum() / b;
      Matrix delta = (probs.array().colwise() * tsum.array()).matrix() - targets;
      delta /= b;
      return {std::move(delta), value};
    }
    case LossKind::SigmoidBinaryCrossEntropy: {
      if (net.layers.back().activation != ActivationKind::Sigmoid)
        throw ContractError("binary cross-entropy requires a sigmoid output layer");
      // softplus form, stable for any logit magnitude
      double value = (z.array().max(0.0) - z.array() * targets.array() +
                      (-z.array().abs()).exp().log1p())
                         .sum() /
                     b;
      Matrix delta = (a - targets) / b;
      return {std::move(delta), value};
    }
  }
  throw ContractError("unknown loss kind");
}

}  // namespace detail

inline Gradients backward(const Network& net, const BatchActivations& acts, const Matrix& targets,
                          LossKind loss) {
  net.check_shape();
  if (acts.pre.size() != net.depth() || acts.post.size() != net.depth())
    throw ShapeError("activations do not cover the network's layers");
  for (std::size_t l = 0; l < net.depth(); ++l)
    if (acts.pre[l].cols() != net.layers[l].out())
      throw ShapeError("activations at layer " + std::to_string(l) + " do not match the network");

  Gradients grads;
  grads.layer.resize(net.depth());
  auto [delta, loss_value] = detail::loss_delta(net, acts, targets, loss);
  grads.loss = loss_value;

  for (std::size_t l = net.depth(); l-- > 0;) {
    const Layer& lay = net.layers[l];
    const Matrix& prev = (l == 0) ? acts.input : acts.post[l - 1];
    Matrix g(lay.out(), lay.in() + 1);
    g.leftCols(lay.in()).noalias() = delta.transpose() * prev;
    g.col(lay.in()) = delta.colwise().sum().transpose();
    grads.layer[l] = std::move(g);
    if (l > 0) {
      Matrix back = delta * lay.weights.leftCols(lay.in());
      delta = back.cwiseProduct(
          activation_derivative_matrix(net.layers[l - 1].activation, acts.pre[l - 1], acts.post[l - 1]));
    }
  }
  return grads;
}

/// Fresh network with entries uniform in [-r, r], r = sqrt(6 / (in + out)),
/// and zero biases. `sizes` runs input, hidden..., output.
inline Network init_network(const std::vector<int>& sizes, ActivationKind hidden_activation,
                            ActivationKind output_activation, std::uint64_t seed) {
  if (sizes.size() < 3) throw ContractError("need at least input, one hidden and output sizes");
  for (int s : sizes)
    if (s < 1) throw ContractError("layer sizes must be positive");

  Network net;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Index in = sizes[l];
    const Index out = sizes[l + 1];
    const bool is_output = (l + 2 == sizes.size());
    const double r = std::sqrt(6.0 / static_cast<double>(in + out));
    std::mt19937_64 rng(derive_seed(seed, l));
    std::uniform_real_distribution<double> dist(-r, r);
    Layer lay;
    lay.activation = is_output ? output_activation : hidden_activation;
    lay.weights = Matrix::Zero(out, in + 1);
    for (Index i = 0; i < out; ++i)
      for (Index j = 0; j < in; ++j) lay.weights(i, j) = dist(rng);
    net.layers.push_back(std::move(lay));
  }
  net.validate();
  return net;
}

}  // namespace apop
