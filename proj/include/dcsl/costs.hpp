#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <stdexcept>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcsl/csv.hpp"
#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"

namespace dcsl {

/// n x n matrix applied to network outputs before softmax. Entries are
/// nonnegative with a strictly positive diagonal (so scaled identities are
/// valid); clinical matrices are strictly positive throughout.
/// Row index = true class, column index = decided class.
class ScoreCostMatrix {
 public:
  explicit ScoreCostMatrix(Matrix entries) : entries_(std::move(entries)) {
    detail::require(entries_.rows() == entries_.cols() && entries_.rows() > 0,
                    "ScoreCostMatrix: must be square and non-empty, got " + shape_string(entries_));
    for (double v : entries_.data()) {
      detail::require(std::isfinite(v) && v >= 0.0,
                      "ScoreCostMatrix: entries must be finite and nonnegative");
    }
    for (std::size_t i = 0; i < size(); ++i) {
      detail::require(entries_(i, i) > 0.0, "ScoreCostMatrix: diagonal must be strictly positive");
    }
  }

  static ScoreCostMatrix identity(std::size_t n) { return ScoreCostMatrix(Matrix::identity(n)); }

  const Matrix& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.rows(); }
  double operator()(std::size_t r, std::size_t c) const { return entries_(r, c); }

 private:
  Matrix entries_;
};

/// Misclassification costs: zero diagonal, nonnegative off-diagonal.
/// Row index = true class, column index = decided class.
class LossCostMatrix {
 public:
  explicit LossCostMatrix(Matrix entries) : entries_(std::move(entries)) {
    detail::require(entries_.rows() == entries_.cols() && entries_.rows() > 0,
                    "LossCostMatrix: must be square and non-empty, got " + shape_string(entries_));
    for (std::size_t p = 0; p < size(); ++p) {
      for (std::size_t q = 0; q < size(); ++q) {
        const double v = entries_(p, q);
        detail::require(std::isfinite(v), "LossCostMatrix: entries must be finite");
        if (p == q) {
          detail::require(v == 0.0, "LossCostMatrix: diagonal entries must be zero");
        } else {
          detail::require(v >= 0.0, "LossCostMatrix: off-diagonal costs must be nonnegative");
        }
      }
    }
  }

  static LossCostMatrix zero_one(std::size_t n) {
    Matrix m(n, n, 1.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 0.0;
    return LossCostMatrix(std::move(m));
  }

  const Matrix& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.rows(); }
  double operator()(std::size_t r, std::size_t c) const { return entries_(r, c); }

 private:
  Matrix entries_;
};

enum class ScoreTransform {
  matrix_product,  // o = f * xi, label-free
  label_row,       // o = xi[y, :] (.) f, needs labels (training only)
};

namespace detail {

inline void check_labels(std::span<const std::size_t> labels, std::size_t rows, std::size_t n) {
  require(labels.size() == rows, "label count " + std::to_string(labels.size()) +
                                     " does not match batch size " + std::to_string(rows));
  for (auto y : labels) require(y < n, "label " + std::to_string(y) + " out of range");
}

}  // namespace detail

inline Matrix apply_score_costs(const Matrix& logits, const ScoreCostMatrix& xi,
                                ScoreTransform mode = ScoreTransform::matrix_product,
                                std::span<const std::size_t> labels = {}) {
  detail::require(logits.cols() == xi.size(), "apply_score_costs: logits have " +
                                                  std::to_string(logits.cols()) +
                                                  " columns, cost matrix is " +
                                                  std::to_string(xi.size()) + "x" +
                                                  std::to_string(xi.size()));
  if (mode == ScoreTransform::matrix_product) return matmul(logits, xi.entries());

  detail::require(!labels.empty() || logits.rows() == 0,
                  "apply_score_costs: label-row transform needs labels");
  detail::check_labels(labels, logits.rows(), xi.size());
  Matrix out = logits;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t q = 0; q < out.cols(); ++q) out(i, q) *= xi(labels[i], q);
  }
  return out;
}

/// Pulls a gradient w.r.t. transformed outputs back to the raw logits.
inline Matrix score_costs_backward(const Matrix& grad_outputs, const ScoreCostMatrix& xi,
                                   ScoreTransform mode, std::span<const std::size_t> labels = {}) {
  detail::require(grad_outputs.cols() == xi.size(), "score_costs_backward: width mismatch");
  if (mode == ScoreTransform::matrix_product) return matmul_a_bt(grad_outputs, xi.entries());
  detail::check_labels(labels, grad_outputs.rows(), xi.size());
  Matrix out = grad_outputs;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t q = 0; q < out.cols(); ++q) out(i, q) *= xi(labels[i], q);
  }
  return out;
}

/// R(p) = sum_q cost(p, q) * P(q) for every candidate decision p.
inline Vector expected_risk(std::span<const double> probs, const LossCostMatrix& costs) {
  detail::require(probs.size() == costs.size(), "expected_risk: distribution has " +
                                                    std::to_string(probs.size()) +
                                                    " entries, cost matrix expects " +
                                                    std::to_string(costs.size()));
  double total = 0.0;
  for (double p : probs) {
    detail::require(std::isfinite(p) && p >= 0.0, "expected_risk: probabilities must be >= 0");
    total += p;
  }
  detail::require(std::abs(total - 1.0) <= 1e-9, "expected_risk: probabilities must sum to 1");

  Vector risk(costs.size(), 0.0);
  for (std::size_t p = 0; p < costs.size(); ++p) {
    for (std::size_t q = 0; q < costs.size(); ++q) risk[p] += costs(p, q) * probs[q];
  }
  return risk;
}

// Lowest index wins ties.
inline std::size_t min_risk_decision(std::span<const double> probs, const LossCostMatrix& costs) {
  const Vector risk = expected_risk(probs, costs);
  std::size_t best = 0;
  for (std::size_t p = 1; p < risk.size(); ++p) {
    if (risk[p] < risk[best]) best = p;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Clinical ordering for the three-class screening setting.

struct ClassRoles {
  std::size_t critical = 0;    // must not be missed
  std::size_t normal = 1;      // healthy
  std::size_t confusable = 2;  // similar-looking non-critical disease
};

struct Misclassification {
  std::size_t truth;
  std::size_t decided;
};

struct OrderingViolation {
  Misclassification more_severe;
  Misclassification less_severe;
  std::string description;
};

enum class CostKind { score, loss };

namespace detail {

inline void check_roles(const ClassRoles& roles, std::size_t n) {
  if (n != 3) {
    throw UnsupportedConfiguration("clinical ordering needs exactly 3 classes, got " +
                                   std::to_string(n));
  }
  require(roles.critical < 3 && roles.normal < 3 && roles.confusable < 3,
          "clinical roles must index classes 0..2");
  require(roles.critical != roles.normal && roles.critical != roles.confusable &&
              roles.normal != roles.confusable,
          "clinical roles must name three distinct classes");
}

// Misclassifications from most to least severe.
inline std::array<Misclassification, 6> severity_chain(const ClassRoles& r) {
  return {{{r.critical, r.normal},
           {r.critical, r.confusable},
           {r.confusable, r.critical},
           {r.confusable, r.normal},
           {r.normal, r.critical},
           {r.normal, r.confusable}}};
}

inline std::string describe(const Misclassification& m, const ClassRoles& r) {
  auto name = [&](std::size_t c) -> std::string {
    if (c == r.critical) return "critical";
    if (c == r.normal) return "normal";
    return "confusable";
  };
  return name(m.truth) + "->" + name(m.decided);
}

template <class Severity>
std::vector<OrderingViolation> check_chain(const ClassRoles& roles, Severity severity) {
  const auto chain = severity_chain(roles);
  std::vector<OrderingViolation> violations;
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    const auto& a = chain[k];
    const auto& b = chain[k + 1];
    if (!(severity(a) > severity(b))) {
      violations.push_back({a, b,
                            "cost(" + describe(a, roles) + ") must exceed cost(" +
                                describe(b, roles) + ")"});
    }
  }
  return violations;
}

}  // namespace detail

/// Empty result means the matrix respects the clinical severity ordering.
/// Loss costs: a larger entry is a more severe mistake.
inline std::vector<OrderingViolation> validate_clinical_ordering(const LossCostMatrix& costs,
                                                                 const ClassRoles& roles = {}) {
  detail::check_roles(roles, costs.size());
  return detail::check_chain(
      roles, [&](const Misclassification& m) { return costs(m.truth, m.decided); });
}

/// Score costs damp the wrong-class score: a smaller entry is a more severe
/// mistake.
inline std::vector<OrderingViolation> validate_clinical_ordering(const ScoreCostMatrix& costs,
                                                                 const ClassRoles& roles = {}) {
  detail::check_roles(roles, costs.size());
  return detail::check_chain(
      roles, [&](const Misclassification& m) { return -costs(m.truth, m.decided); });
}

inline Matrix default_clinical_matrix(CostKind kind, const ClassRoles& roles = {}) {
  detail::check_roles(roles, 3);
  // Most to least severe, matching detail::severity_chain.
  constexpr std::array<double, 6> score_damping{0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  constexpr std::array<double, 6> loss_cost{6.0, 5.0, 4.0, 3.0, 2.0, 1.0};
  Matrix m(3, 3, 0.0);
  if (kind == CostKind::score) {
    for (std::size_t i = 0; i < 3; ++i) m(i, i) = 1.0;
  }
  const auto chain = detail::severity_chain(roles);
  for (std::size_t k = 0; k < chain.size(); ++k) {
    m(chain[k].truth, chain[k].decided) = kind == CostKind::score ? score_damping[k] : loss_cost[k];
  }
  return m;
}

inline ScoreCostMatrix default_clinical_score_matrix(const ClassRoles& roles = {}) {
  return ScoreCostMatrix(default_clinical_matrix(CostKind::score, roles));
}

inline LossCostMatrix default_clinical_loss_matrix(const ClassRoles& roles = {}) {
  return LossCostMatrix(default_clinical_matrix(CostKind::loss, roles));
}

/// n rows of n comma-separated values, no header.
inline Matrix parse_cost_matrix(std::istream& in, const std::string& source) {
  const auto table = csv::read(in, source, false);
  if (table.rows.empty()) throw ParseError(source, 0, "empty cost matrix");
  const std::size_t n = table.rows.size();
  Matrix m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    if (row.cells.size() != n) {
      throw ParseError(source, row.line,
                       "cost matrix must be square: " + std::to_string(n) + " rows but " +
                           std::to_string(row.cells.size()) + " columns");
    }
    for (std::size_t c = 0; c < n; ++c) {
      const auto value = csv::parse_double(row.cells[c]);
      if (!value || !std::isfinite(*value)) {
        throw ParseError(source, row.line, "not a number: '" + row.cells[c] + "'");
      }
      m(r, c) = *value;
    }
  }
  return m;
}

inline Matrix load_cost_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return parse_cost_matrix(in, path);
}

}  // namespace dcsl
