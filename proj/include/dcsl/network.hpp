#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"

namespace dcsl {

enum class Activation { relu, identity };

struct DenseLayer {
  Matrix weights;  // in_dim x out_dim
  Vector bias;     // out_dim
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weights.rows(); }
  std::size_t out_dim() const noexcept { return weights.cols(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Layer widths for a dense classifier: input -> hidden... -> feature -> classes.
struct NetworkShape {
  std::size_t input_dim = 8;
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 2;
  std::size_t num_classes = 3;
  Activation hidden_activation = Activation::relu;
  Activation feature_activation = Activation::identity;
};

/// Ordered stack of dense layers. The input of the last layer is the deep
/// feature vector (the space class centers live in); the last layer's
/// pre-activation output is the logit vector.
class Network {
 public:
  Network() = default;

  explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    detail::require(!layers_.empty(), "Network: at least one layer required");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      detail::require(layer.bias.size() == layer.out_dim(),
                      "Network: bias size mismatch in layer " + std::to_string(l));
      detail::require(layer.in_dim() > 0 && layer.out_dim() > 0,
                      "Network: empty layer " + std::to_string(l));
      if (l > 0) {
        detail::require(layers_[l - 1].out_dim() == layer.in_dim(),
                        "Network: layer " + std::to_string(l) + " does not chain");
      }
    }
    detail::require(layers_.back().activation == Activation::identity,
                    "Network: output layer must have identity activation");
  }

  /// Fan-in scaled uniform initialization, zero biases; deterministic in `seed`.
  static Network random(const NetworkShape& shape, std::uint64_t seed) {
    std::vector<std::size_t> dims{shape.input_dim};
    dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
    dims.push_back(shape.feature_dim);
    dims.push_back(shape.num_classes);

    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> layers;
    const std::size_t count = dims.size() - 1;
    for (std::size_t l = 0; l < count; ++l) {
      Activation act = Activation::identity;
      if (l + 1 < count - 1) act = shape.hidden_activation;
      else if (l + 1 == count - 1) act = shape.feature_activation;

      const double fan_in = static_cast<double>(dims[l]);
      const double limit = std::sqrt((act == Activation::relu ? 6.0 : 3.0) / fan_in);
      std::uniform_real_distribution<double> dist(-limit, limit);
      DenseLayer layer{Matrix(dims[l], dims[l + 1]), Vector(dims[l + 1], 0.0), act};
      for (double& w : layer.weights.data()) w = dist(rng);
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t feature_dim() const { return layers_.back().in_dim(); }
  std::size_t num_classes() const { return layers_.back().out_dim(); }

  // Index of the layer producing the deep features; none for a single-layer
  // net, whose features are its raw input.
  std::optional<std::size_t> feature_layer_index() const {
    if (layers_.size() < 2) return std::nullopt;
    return layers_.size() - 2;
  }

  // Weights then bias, per layer, in forward order.
  std::vector<std::span<double>> parameter_blocks() {
    std::vector<std::span<double>> blocks;
    for (auto& layer : layers_) {
      blocks.push_back(layer.weights.data());
      blocks.push_back(layer.bias);
    }
    return blocks;
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

struct ForwardCache {
  std::vector<Matrix> inputs;           // input to each layer
  std::vector<Matrix> pre_activations;  // per layer
};

struct ForwardResult {
  Matrix features;  // m x feature_dim
  Matrix logits;    // m x num_classes
  ForwardCache cache;
};

struct LayerGradients {
  Matrix weights;
  Vector bias;
};

struct Gradients {
  std::vector<LayerGradients> layers;

  std::vector<std::span<const double>> blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& g : layers) {
      out.push_back(g.weights.data());
      out.push_back(g.bias);
    }
    return out;
  }
};

namespace detail {

inline double activate(Activation act, double z) {
  return act == Activation::relu ? (z > 0.0 ? z : 0.0) : z;
}

inline double activation_slope(Activation act, double z) {
  return act == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

}  // namespace detail

inline ForwardResult forward(const Network& net, const Matrix& batch) {
  detail::require(batch.cols() == net.input_dim(),
                  "forward: batch has " + std::to_string(batch.cols()) +
                      " columns, network expects " + std::to_string(net.input_dim()));
  ForwardResult result;
  const auto& layers = net.layers();
  Matrix activation = batch;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    Matrix z = matmul(activation, layer.weights);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
    result.cache.inputs.push_back(std::move(activation));
    activation = z;
    for (double& v : activation.data()) v = detail::activate(layer.activation, v);
    result.cache.pre_activations.push_back(std::move(z));
  }
  result.features = result.cache.inputs.back();
  result.logits = result.cache.pre_activations.back();
  return result;
}

/// Backpropagates logit gradients plus a direct gradient on the deep
/// features (the center-loss path, which bypasses the output layer).
inline Gradients backward(const Network& net, const ForwardCache& cache,
                          const Matrix& grad_logits, const Matrix& grad_features) {
  const auto& layers = net.layers();
  detail::require(cache.inputs.size() == layers.size() &&
                      cache.pre_activations.size() == layers.size(),
                  "backward: cache does not match network");
  const std::size_t m = cache.inputs.front().rows();
  detail::require(grad_logits.rows() == m && grad_logits.cols() == net.num_classes(),
                  "backward: grad_logits shape " + shape_string(grad_logits));
  detail::require(grad_features.rows() == m && grad_features.cols() == net.feature_dim(),
                  "backward: grad_features shape " + shape_string(grad_features));

  Gradients grads;
  grads.layers.resize(layers.size());
  Matrix grad_z = grad_logits;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    auto& g = grads.layers[l];
    g.weights = matmul_at_b(cache.inputs[l], grad_z);
    g.bias.assign(layer.out_dim(), 0.0);
    for (std::size_t i = 0; i < grad_z.rows(); ++i) {
      for (std::size_t j = 0; j < grad_z.cols(); ++j) g.bias[j] += grad_z(i, j);
    }
    if (l == 0) break;

    Matrix grad_input = matmul_a_bt(grad_z, layer.weights);
    if (l == layers.size() - 1) {
      for (std::size_t k = 0; k < grad_input.size(); ++k) {
        grad_input.data()[k] += grad_features.data()[k];
      }
    }
    const auto& below = layers[l - 1];
    const auto& z_below = cache.pre_activations[l - 1];
    for (std::size_t k = 0; k < grad_input.size(); ++k) {
      grad_input.data()[k] *= detail::activation_slope(below.activation, z_below.data()[k]);
    }
    grad_z = std::move(grad_input);
  }
  return grads;
}

}  // namespace dcsl
