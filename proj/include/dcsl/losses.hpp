#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcsl/costs.hpp"
#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"

namespace dcsl {

inline constexpr double kDefaultCenterLossWeight = 0.05;

/// Non-owning view of one mini-batch: deep features, logits and labels.
struct LabeledBatch {
  const Matrix& features;  // m x d
  const Matrix& logits;    // m x n
  std::span<const std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return logits.cols(); }
};

struct LossResult {
  double loss = 0.0;
  Matrix gradient;
};

struct DcslLossResult {
  double loss = 0.0;
  double classification_term = 0.0;
  double center_term = 0.0;  // before scaling by lambda
  Matrix grad_logits;        // w.r.t. the raw (untransformed) logits
  Matrix grad_features;
};

namespace detail {

inline void validate_batch(const LabeledBatch& batch) {
  const std::size_t m = batch.size();
  require(m > 0, "empty batch");
  require(batch.logits.rows() == m, "logits have " + std::to_string(batch.logits.rows()) +
                                        " rows for " + std::to_string(m) + " labels");
  require(batch.features.rows() == m, "features have " + std::to_string(batch.features.rows()) +
                                          " rows for " + std::to_string(m) + " labels");
  require(batch.num_classes() > 0, "logits have no columns");
  for (auto y : batch.labels) {
    require(y < batch.num_classes(), "label " + std::to_string(y) + " out of range [0, " +
                                         std::to_string(batch.num_classes()) + ")");
  }
}

inline void validate_class_weights(std::span<const double> weights, std::size_t n) {
  require(weights.size() == n, "expected " + std::to_string(n) + " class weights, got " +
                                   std::to_string(weights.size()));
  for (double w : weights) require(std::isfinite(w) && w > 0.0, "class weights must be positive");
}

// log-softmax of one row, max-shifted.
inline void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - shift);
  const double log_sum = std::log(sum);
  for (std::size_t q = 0; q < logits.size(); ++q) out[q] = logits[q] - shift - log_sum;
}

inline LossResult weighted_center_term(const LabeledBatch& batch, const Matrix& centers,
                                       std::span<const double> class_weights) {
  validate_batch(batch);
  require(centers.rows() == batch.num_classes(),
          "centers have " + std::to_string(centers.rows()) + " rows for " +
              std::to_string(batch.num_classes()) + " classes");
  require(centers.cols() == batch.features.cols(),
          "center dimension " + std::to_string(centers.cols()) + " does not match feature dimension " +
              std::to_string(batch.features.cols()));
  const std::size_t m = batch.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  LossResult result{0.0, Matrix(m, batch.features.cols())};
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t y = batch.labels[i];
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    const auto x = batch.features.row(i);
    const auto c = centers.row(y);
    auto g = result.gradient.row(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double diff = x[k] - c[k];
      sq += diff * diff;
      g[k] = 2.0 * w * inv_m * diff;
    }
    sum += w * sq;
  }
  result.loss = sum * inv_m;
  return result;
}

}  // namespace detail

inline Vector softmax(std::span<const double> logits) {
  detail::require(!logits.empty(), "softmax: empty input");
  detail::require(all_finite(logits), "softmax: non-finite logit");
  Vector out(logits.size());
  detail::log_softmax(logits, out);
  for (double& v : out) v = std::exp(v);
  return out;
}

/// Mean (optionally class-weighted) softmax cross-entropy:
/// -(1/m) sum_i w[y_i] log p_i[y_i].
inline LossResult softmax_ce(const LabeledBatch& batch, std::span<const double> class_weights = {}) {
  detail::validate_batch(batch);
  detail::require(all_finite(batch.logits), "softmax_ce: non-finite logit");
  if (!class_weights.empty()) detail::validate_class_weights(class_weights, batch.num_classes());

  const std::size_t m = batch.size();
  const std::size_t n = batch.num_classes();
  LossResult result{0.0, Matrix(m, n)};
  Vector log_p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t y = batch.labels[i];
    const double w = class_weights.empty() ? 1.0 : class_weights[y];
    detail::log_softmax(batch.logits.row(i), log_p);
    sum += w * -log_p[y];
    const double scale = w / static_cast<double>(m);
    auto g = result.gradient.row(i);
    for (std::size_t q = 0; q < n; ++q) {
      g[q] = (std::exp(log_p[q]) - (q == y ? 1.0 : 0.0)) * scale;
    }
  }
  result.loss = sum / static_cast<double>(m);
  return result;
}

/// (1/m) sum_i ||x_i - c[y_i]||^2; centers are constants for the gradient.
inline LossResult center_loss(const LabeledBatch& batch, const Matrix& centers) {
  return detail::weighted_center_term(batch, centers, {});
}

/// Center loss with each example's term scaled by its class weight.
inline LossResult conditional_center_loss(const LabeledBatch& batch, const Matrix& centers,
                                          std::span<const double> class_weights) {
  detail::validate_batch(batch);
  detail::validate_class_weights(class_weights, batch.num_classes());
  return detail::weighted_center_term(batch, centers, class_weights);
}

enum class CostWeighting {
  decided_class,  // cost[y, argmax p]
  expected_cost,  // sum_q cost[y, q] p_q
};

/// Cross-entropy with each example scaled by its misclassification cost.
/// Under a zero-diagonal matrix, correctly decided examples contribute
/// nothing in decided_class mode.
inline LossResult cost_weighted_ce(const LabeledBatch& batch, const LossCostMatrix& costs,
                                   CostWeighting weighting = CostWeighting::decided_class) {
  detail::validate_batch(batch);
  detail::require(costs.size() == batch.num_classes(),
                  "cost_weighted_ce: cost matrix is " + std::to_string(costs.size()) + "x" +
                      std::to_string(costs.size()) + " for " +
                      std::to_string(batch.num_classes()) + " classes");
  detail::require(all_finite(batch.logits), "cost_weighted_ce: non-finite logit");

  const std::size_t m = batch.size();
  const std::size_t n = batch.num_classes();
  const double inv_m = 1.0 / static_cast<double>(m);
  LossResult result{0.0, Matrix(m, n)};
  Vector log_p(n);
  Vector p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t y = batch.labels[i];
    detail::log_softmax(batch.logits.row(i), log_p);
    for (std::size_t q = 0; q < n; ++q) p[q] = std::exp(log_p[q]);
    auto g = result.gradient.row(i);

    if (weighting == CostWeighting::decided_class) {
      const auto decided = static_cast<std::size_t>(
          std::distance(log_p.begin(), std::max_element(log_p.begin(), log_p.end())));
      const double s = costs(y, decided);
      sum += s * -log_p[y];
      for (std::size_t q = 0; q < n; ++q) g[q] = s * inv_m * (p[q] - (q == y ? 1.0 : 0.0));
    } else {
      double s = 0.0;
      for (std::size_t q = 0; q < n; ++q) s += costs(y, q) * p[q];
      sum += s * -log_p[y];
      // d/dz_q of -s log p_y, with ds/dz_q = p_q (cost[y,q] - s).
      for (std::size_t q = 0; q < n; ++q) {
        g[q] = inv_m * (s * (p[q] - (q == y ? 1.0 : 0.0)) - log_p[y] * p[q] * (costs(y, q) - s));
      }
    }
  }
  result.loss = sum * inv_m;
  return result;
}

/// Joint loss: class-weighted softmax CE on cost-transformed logits plus
/// lambda times the class-weighted center term.
inline DcslLossResult dcsl_loss(const LabeledBatch& batch, const Matrix& centers,
                                std::span<const double> class_weights,
                                const ScoreCostMatrix& score_costs, double center_weight,
                                ScoreTransform transform = ScoreTransform::matrix_product) {
  detail::validate_batch(batch);
  detail::require(std::isfinite(center_weight) && center_weight >= 0.0,
                  "dcsl_loss: center-loss weight must be >= 0");
  detail::require(score_costs.size() == batch.num_classes(),
                  "dcsl_loss: score cost matrix does not match class count");

  const Matrix outputs = apply_score_costs(batch.logits, score_costs, transform, batch.labels);
  const LabeledBatch transformed{batch.features, outputs, batch.labels};
  LossResult ce = softmax_ce(transformed, class_weights);
  LossResult center = conditional_center_loss(batch, centers, class_weights);

  DcslLossResult result;
  result.classification_term = ce.loss;
  result.center_term = center.loss;
  result.loss = ce.loss + center_weight * center.loss;
  result.grad_logits = score_costs_backward(ce.gradient, score_costs, transform, batch.labels);
  result.grad_features = std::move(center.gradient);
  for (double& g : result.grad_features.data()) g *= center_weight;
  return result;
}

}  // namespace dcsl
