#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"

namespace dcsl {

/// Where the class weight w_j enters the center update
/// c_j <- c_j - alpha [w_j] delta_j, delta_j = [w_j] sum (c_j - x_i) / (1 + n_j).
enum class CenterWeighting {
  none,    // plain center-loss update
  delta,   // weight inside the mini-batch delta only
  update,  // weight on the update step only
  both,    // weight in both places (w_j^2 overall)
};

struct CenterBank {
  Matrix centers;  // num_classes x feature_dim
  double alpha = 1.0;
  CenterWeighting weighting = CenterWeighting::both;

  std::size_t num_classes() const noexcept { return centers.rows(); }
  std::size_t dim() const noexcept { return centers.cols(); }

  friend bool operator==(const CenterBank&, const CenterBank&) = default;
};

inline CenterBank init_centers(std::size_t num_classes, std::size_t dim, double alpha = 1.0,
                               CenterWeighting weighting = CenterWeighting::both) {
  detail::require(num_classes >= 1 && dim >= 1, "init_centers: need at least one class and dimension");
  detail::require(std::isfinite(alpha) && alpha > 0.0 && alpha <= 1.0,
                  "init_centers: alpha must lie in (0, 1]");
  return {Matrix(num_classes, dim, 0.0), alpha, weighting};
}

namespace detail {

inline bool weights_delta(CenterWeighting w) {
  return w == CenterWeighting::delta || w == CenterWeighting::both;
}

inline bool weights_update(CenterWeighting w) {
  return w == CenterWeighting::update || w == CenterWeighting::both;
}

inline void check_center_weights(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return;
  require(weights.size() == n, "center update: expected " + std::to_string(n) +
                                   " class weights, got " + std::to_string(weights.size()));
  for (double w : weights) require(std::isfinite(w) && w > 0.0, "center update: weights must be positive");
}

}  // namespace detail

/// Mini-batch center deltas. Classes absent from the batch get a zero delta.
/// Weights (if given) are applied when the bank's weighting mode covers the delta.
inline Matrix delta_centers(const Matrix& features, std::span<const std::size_t> labels,
                            const CenterBank& bank, std::span<const double> class_weights = {}) {
  detail::require(features.rows() == labels.size(), "delta_centers: " +
                                                        std::to_string(features.rows()) +
                                                        " features for " +
                                                        std::to_string(labels.size()) + " labels");
  detail::require(features.cols() == bank.dim(), "delta_centers: feature dimension " +
                                                     std::to_string(features.cols()) +
                                                     " does not match center dimension " +
                                                     std::to_string(bank.dim()));
  detail::check_center_weights(class_weights, bank.num_classes());

  const std::size_t n = bank.num_classes();
  Matrix sums(n, bank.dim());
  std::vector<std::size_t> counts(n, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t y = labels[i];
    detail::require(y < n, "delta_centers: label " + std::to_string(y) + " out of range");
    ++counts[y];
    auto s = sums.row(y);
    const auto x = features.row(i);
    const auto c = bank.centers.row(y);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += c[k] - x[k];
  }

  const bool weighted = !class_weights.empty() && detail::weights_delta(bank.weighting);
  Matrix deltas(n, bank.dim());
  for (std::size_t j = 0; j < n; ++j) {
    if (counts[j] == 0) continue;
    const double w = weighted ? class_weights[j] : 1.0;
    const double denom = 1.0 + static_cast<double>(counts[j]);
    auto d = deltas.row(j);
    const auto s = sums.row(j);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = w * s[k] / denom;
  }
  return deltas;
}

/// c_j <- c_j - alpha [w_j] delta_j.
inline void update_centers(CenterBank& bank, const Matrix& deltas,
                           std::span<const double> class_weights = {}) {
  detail::require(deltas.rows() == bank.num_classes() && deltas.cols() == bank.dim(),
                  "update_centers: delta shape " + shape_string(deltas) +
                      " does not match bank " + shape_string(bank.centers));
  detail::require(all_finite(deltas), "update_centers: non-finite delta");
  detail::check_center_weights(class_weights, bank.num_classes());

  const bool weighted = !class_weights.empty() && detail::weights_update(bank.weighting);
  for (std::size_t j = 0; j < bank.num_classes(); ++j) {
    const double step = bank.alpha * (weighted ? class_weights[j] : 1.0);
    auto c = bank.centers.row(j);
    const auto d = deltas.row(j);
    for (std::size_t k = 0; k < c.size(); ++k) c[k] -= step * d[k];
  }
}

// Delta then update; the trainer calls this once per mini-batch.
inline void step_centers(CenterBank& bank, const Matrix& features,
                         std::span<const std::size_t> labels,
                         std::span<const double> class_weights = {}) {
  const Matrix deltas = delta_centers(features, labels, bank, class_weights);
  update_centers(bank, deltas, class_weights);
}

}  // namespace dcsl
