#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "dcsl/error.hpp"

namespace dcsl {

/// counts(truth, predicted).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0)
      : n_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const noexcept { return n_; }
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * n_ + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * n_ + predicted];
  }

  std::size_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }
  std::size_t row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t q = 0; q < n_; ++q) s += at(truth, q);
    return s;
  }
  std::size_t col_sum(std::size_t predicted) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += at(p, predicted);
    return s;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    detail::require(other.n_ == n_, "ConfusionMatrix: class count mismatch");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t num_classes) {
  detail::require(predictions.size() == labels.size(),
                  "confusion: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(labels[i] < num_classes && predictions[i] < num_classes,
                    "confusion: class index out of range");
    ++cm.at(labels[i], predictions[i]);
  }
  return cm;
}

struct MetricsReport {
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double sensitivity_macro = 0.0;
  double f1_macro = 0.0;
  // Support-weighted averages, for comparison with weighted reporting.
  double precision_weighted = 0.0;
  double sensitivity_weighted = 0.0;
  double f1_weighted = 0.0;
  std::vector<double> precision_per_class;
  std::vector<double> sensitivity_per_class;
  std::vector<double> f1_per_class;
  // Set when some class had no true or no predicted examples; its
  // undefined ratios were counted as 0.
  bool has_undefined = false;
  ConfusionMatrix confusion;
};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  detail::require(total > 0, "metrics: confusion matrix is empty");
  const std::size_t n = cm.num_classes();

  MetricsReport r;
  r.confusion = cm;
  r.precision_per_class.assign(n, 0.0);
  r.sensitivity_per_class.assign(n, 0.0);
  r.f1_per_class.assign(n, 0.0);

  std::size_t correct = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double tp = static_cast<double>(cm.at(j, j));
    correct += cm.at(j, j);
    const std::size_t predicted = cm.col_sum(j);
    const std::size_t actual = cm.row_sum(j);
    if (predicted > 0) r.precision_per_class[j] = tp / static_cast<double>(predicted);
    else r.has_undefined = true;
    if (actual > 0) r.sensitivity_per_class[j] = tp / static_cast<double>(actual);
    else r.has_undefined = true;
    const double p = r.precision_per_class[j];
    const double s = r.sensitivity_per_class[j];
    if (p + s > 0.0) r.f1_per_class[j] = 2.0 * p * s / (p + s);
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(total);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    r.precision_macro += r.precision_per_class[j] * inv_n;
    r.sensitivity_macro += r.sensitivity_per_class[j] * inv_n;
    r.f1_macro += r.f1_per_class[j] * inv_n;
    const double support = static_cast<double>(cm.row_sum(j)) / static_cast<double>(total);
    r.precision_weighted += r.precision_per_class[j] * support;
    r.sensitivity_weighted += r.sensitivity_per_class[j] * support;
    r.f1_weighted += r.f1_per_class[j] * support;
  }
  return r;
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t df = 0;
};

/// Two-sided p-value of Student's t with `df` degrees of freedom:
/// P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, double df) {
  detail::require(df > 0.0, "student_t_two_sided_p: df must be positive");
  if (!std::isfinite(t)) return 0.0;
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

/// Paired t-test on per-fold (or per-run) values of two methods.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "paired_ttest: samples differ in length");
  detail::require(a.size() >= 2, "paired_ttest: need at least two pairs");
  const std::size_t k = a.size();
  std::vector<double> d(k);
  for (std::size_t i = 0; i < k; ++i) {
    d[i] = a[i] - b[i];
    detail::require(std::isfinite(d[i]), "paired_ttest: non-finite value");
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(k);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(k - 1);
  const bool identical = std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); });
  if (identical || !(var > 0.0)) {
    throw DegenerateSample("paired_ttest: differences have zero variance");
  }
  TTestResult r;
  r.df = k - 1;
  r.t = mean / std::sqrt(var / static_cast<double>(k));
  r.p_value = student_t_two_sided_p(r.t, static_cast<double>(r.df));
  return r;
}

}  // namespace dcsl
