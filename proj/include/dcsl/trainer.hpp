#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcsl/adam.hpp"
#include "dcsl/centers.hpp"
#include "dcsl/costs.hpp"
#include "dcsl/data.hpp"
#include "dcsl/error.hpp"
#include "dcsl/losses.hpp"
#include "dcsl/matrix.hpp"
#include "dcsl/network.hpp"

namespace dcsl {

/// The four training objectives, from plain softmax up to the full method.
enum class LossMode {
  softmax,      // cross-entropy only
  softmax_cl,   // + center loss, unweighted center updates
  softmax_ccl,  // class-weighted cross-entropy + conditional center loss
  dcsl,         // softmax_ccl on score-cost-transformed outputs
};

enum class ClassWeightMode {
  frequency,          // w_j = n_j / N
  inverse_frequency,  // w_j proportional to N / n_j, summing to 1
  unit,               // w_j = 1
};

struct TrainConfig {
  LossMode loss_mode = LossMode::dcsl;
  double center_loss_weight = kDefaultCenterLossWeight;  // lambda_C
  double center_alpha = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  CenterWeighting center_weighting = CenterWeighting::both;
  ScoreTransform score_transform = ScoreTransform::matrix_product;
  bool costs_at_test = true;
  ClassWeightMode class_weight_mode = ClassWeightMode::inverse_frequency;
  // Unset: the clinical default (three-class problems only).
  std::optional<ScoreCostMatrix> score_costs;

  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 2;
  Activation feature_activation = Activation::identity;

  void validate() const {
    detail::require(std::isfinite(center_loss_weight) && center_loss_weight >= 0.0,
                    "TrainConfig: lambda_C must be >= 0");
    detail::require(std::isfinite(center_alpha) && center_alpha > 0.0 && center_alpha <= 1.0,
                    "TrainConfig: alpha must lie in (0, 1]");
    detail::require(std::isfinite(learning_rate) && learning_rate > 0.0,
                    "TrainConfig: learning rate must be > 0");
    detail::require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(batch_size >= 1, "TrainConfig: batch size must be >= 1");
    detail::require(feature_dim >= 1, "TrainConfig: feature dimension must be >= 1");
    for (auto h : hidden) detail::require(h >= 1, "TrainConfig: hidden widths must be >= 1");
  }
};

struct EpochRecord {
  double loss = 0.0;                 // mean over batches of the joint loss
  double classification_loss = 0.0;  // mean cross-entropy term
  double center_loss = 0.0;          // mean unscaled center term (0 for softmax)
  double train_accuracy = 0.0;       // on the batches as they were seen

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
  TrainConfig config;
  Network network;
  CenterBank centers;
  AdamState optimizer;
  Vector class_weights;
  std::optional<ScoreCostMatrix> score_costs;  // resolved; set for dcsl only
  std::uint64_t iteration = 0;                 // processed batches
  std::vector<EpochRecord> history;
};

inline Vector class_weights(std::span<const std::size_t> labels, std::size_t num_classes,
                            ClassWeightMode mode) {
  detail::require(num_classes >= 1, "class_weights: no classes");
  std::vector<std::size_t> counts(num_classes, 0);
  for (auto y : labels) {
    detail::require(y < num_classes, "class_weights: label out of range");
    ++counts[y];
  }
  for (std::size_t j = 0; j < num_classes; ++j) {
    detail::require(counts[j] > 0, "class_weights: class " + std::to_string(j) + " is empty");
  }
  const double total = static_cast<double>(labels.size());
  Vector w(num_classes, 1.0);
  switch (mode) {
    case ClassWeightMode::unit:
      break;
    case ClassWeightMode::frequency:
      for (std::size_t j = 0; j < num_classes; ++j) w[j] = static_cast<double>(counts[j]) / total;
      break;
    case ClassWeightMode::inverse_frequency: {
      double sum = 0.0;
      for (std::size_t j = 0; j < num_classes; ++j) {
        w[j] = total / static_cast<double>(counts[j]);
        sum += w[j];
      }
      for (double& v : w) v /= sum;
      break;
    }
  }
  return w;
}

namespace detail {

inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t q = 1; q < row.size(); ++q) {
    if (row[q] > row[best]) best = q;
  }
  return best;
}

inline bool uses_centers(LossMode mode) { return mode != LossMode::softmax; }
inline bool uses_class_weights(LossMode mode) {
  return mode == LossMode::softmax_ccl || mode == LossMode::dcsl;
}

inline ScoreCostMatrix resolve_score_costs(const TrainConfig& config, std::size_t num_classes) {
  if (config.score_costs) {
    require(config.score_costs->size() == num_classes,
            "TrainConfig: score cost matrix is " + std::to_string(config.score_costs->size()) +
                "x" + std::to_string(config.score_costs->size()) + " for " +
                std::to_string(num_classes) + " classes");
    return *config.score_costs;
  }
  if (num_classes != 3) {
    throw UnsupportedConfiguration(
        "dcsl mode without an explicit score cost matrix needs exactly 3 classes");
  }
  return default_clinical_score_matrix();
}

struct BatchLoss {
  double loss = 0.0;
  double classification = 0.0;
  double center = 0.0;
  Matrix grad_logits;
  Matrix grad_features;
  Matrix scored_outputs;  // what predictions are read from
};

inline BatchLoss joint_loss(const TrainState& state, const LabeledBatch& batch) {
  const auto& cfg = state.config;
  const double lambda = cfg.center_loss_weight;
  BatchLoss out;
  switch (cfg.loss_mode) {
    case LossMode::softmax: {
      auto ce = softmax_ce(batch);
      out.loss = ce.loss;
      out.classification = ce.loss;
      out.grad_logits = std::move(ce.gradient);
      out.grad_features = Matrix(batch.features.rows(), batch.features.cols());
      out.scored_outputs = batch.logits;
      break;
    }
    case LossMode::softmax_cl:
    case LossMode::softmax_ccl: {
      const bool weighted = cfg.loss_mode == LossMode::softmax_ccl;
      auto ce = weighted ? softmax_ce(batch, state.class_weights) : softmax_ce(batch);
      auto center = weighted ? conditional_center_loss(batch, state.centers.centers, state.class_weights)
                             : center_loss(batch, state.centers.centers);
      out.loss = ce.loss + lambda * center.loss;
      out.classification = ce.loss;
      out.center = center.loss;
      out.grad_logits = std::move(ce.gradient);
      out.grad_features = std::move(center.gradient);
      for (double& g : out.grad_features.data()) g *= lambda;
      out.scored_outputs = batch.logits;
      break;
    }
    case LossMode::dcsl: {
      auto r = dcsl_loss(batch, state.centers.centers, state.class_weights, *state.score_costs,
                         lambda, cfg.score_transform);
      out.loss = r.loss;
      out.classification = r.classification_term;
      out.center = r.center_term;
      out.grad_logits = std::move(r.grad_logits);
      out.grad_features = std::move(r.grad_features);
      out.scored_outputs = cfg.costs_at_test && cfg.score_transform == ScoreTransform::matrix_product
                               ? apply_score_costs(batch.logits, *state.score_costs,
                                                   ScoreTransform::matrix_product)
                               : batch.logits;
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Fresh state: random network, zero centers, empty optimizer, resolved
/// class weights and score costs.
inline TrainState init_state(const Dataset& train, const TrainConfig& config) {
  config.validate();
  train.validate();
  TrainState state;
  state.config = config;
  NetworkShape shape;
  shape.input_dim = train.input_dim();
  shape.hidden = config.hidden;
  shape.feature_dim = config.feature_dim;
  shape.num_classes = train.num_classes();
  shape.feature_activation = config.feature_activation;
  state.network = Network::random(shape, derive_seed(config.seed, 0));
  state.centers = init_centers(train.num_classes(), config.feature_dim, config.center_alpha,
                               config.center_weighting);
  const ClassWeightMode weight_mode = detail::uses_class_weights(config.loss_mode)
                                          ? config.class_weight_mode
                                          : ClassWeightMode::unit;
  state.class_weights = class_weights(train.labels, train.num_classes(), weight_mode);
  if (config.loss_mode == LossMode::dcsl) {
    state.score_costs = detail::resolve_score_costs(config, train.num_classes());
  }
  return state;
}

/// Runs the joint training loop for `config.epochs` epochs. Per batch:
/// forward, joint loss, center update, then one Adam step on all layers.
inline TrainState fit(const Dataset& train, const TrainConfig& config) {
  TrainState state = init_state(train, config);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const bool center_weights = detail::uses_class_weights(config.loss_mode);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    std::size_t batches = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix x = gather_rows(train.features, idx);
      std::vector<std::size_t> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(train.labels[i]);

      const auto where = [&] {
        return "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batches + 1);
      };
      auto fwd = forward(state.network, x);
      if (!all_finite(fwd.logits) || !all_finite(fwd.features)) {
        throw TrainingDivergence("non-finite network output at " + where());
      }
      const LabeledBatch batch{fwd.features, fwd.logits, y};
      auto loss = detail::joint_loss(state, batch);
      if (!std::isfinite(loss.loss)) throw TrainingDivergence("non-finite loss at " + where());

      for (std::size_t i = 0; i < y.size(); ++i) {
        if (detail::argmax(loss.scored_outputs.row(i)) == y[i]) ++correct;
      }

      if (detail::uses_centers(config.loss_mode)) {
        step_centers(state.centers, fwd.features, y,
                     center_weights ? std::span<const double>(state.class_weights)
                                    : std::span<const double>{});
      }
      const Gradients grads = backward(state.network, fwd.cache, loss.grad_logits, loss.grad_features);
      try {
        adam_step(state.network, grads, state.optimizer, config.learning_rate);
      } catch (const TrainingDivergence& e) {
        throw TrainingDivergence(std::string(e.what()) + " (" + where() + ")");
      }

      ++state.iteration;
      ++batches;
      record.loss += loss.loss;
      record.classification_loss += loss.classification;
      record.center_loss += loss.center;
    }
    const double nb = static_cast<double>(batches);
    record.loss /= nb;
    record.classification_loss /= nb;
    record.center_loss /= nb;
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    state.history.push_back(record);
  }
  return state;
}

struct Prediction {
  std::vector<std::size_t> labels;
  Matrix probabilities;  // softmax rows
};

/// Forward pass, score costs (dcsl with costs_at_test), softmax, argmax with
/// ties going to the lowest class index. The label-row transform has no
/// label-free form, so models trained with it predict from raw logits.
inline Prediction predict(const TrainState& state, const Matrix& features, bool costs_at_test) {
  auto fwd = forward(state.network, features);
  Matrix scores = std::move(fwd.logits);
  if (costs_at_test && state.config.loss_mode == LossMode::dcsl && state.score_costs &&
      state.config.score_transform == ScoreTransform::matrix_product) {
    scores = apply_score_costs(scores, *state.score_costs, ScoreTransform::matrix_product);
  }
  Prediction out;
  out.probabilities = Matrix(scores.rows(), scores.cols());
  out.labels.reserve(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const Vector p = softmax(scores.row(i));
    std::copy(p.begin(), p.end(), out.probabilities.row(i).begin());
    out.labels.push_back(detail::argmax(scores.row(i)));
  }
  return out;
}

inline Prediction predict(const TrainState& state, const Matrix& features) {
  return predict(state, features, state.config.costs_at_test);
}

// Deep features (penultimate activations) for each row.
inline Matrix embed(const TrainState& state, const Matrix& features) {
  return forward(state.network, features).features;
}

}  // namespace dcsl
