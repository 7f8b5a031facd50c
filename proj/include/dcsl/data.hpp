#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcsl/csv.hpp"
#include "dcsl/error.hpp"
#include "dcsl/matrix.hpp"

namespace dcsl {

struct Dataset {
  Matrix features;  // N x in_dim
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (auto y : labels) ++counts[y];
    return counts;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{gather_rows(features, indices), {}, class_names};
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels[i]);
    return out;
  }

  void validate() const {
    detail::require(features.rows() == labels.size(), "Dataset: feature rows do not match labels");
    detail::require(!class_names.empty(), "Dataset: no classes");
    detail::require(size() >= num_classes(), "Dataset: fewer examples than classes");
    detail::require(all_finite(features), "Dataset: non-finite feature value");
    for (auto y : labels) detail::require(y < num_classes(), "Dataset: label out of range");
    const auto counts = class_counts();
    for (std::size_t j = 0; j < counts.size(); ++j) {
      detail::require(counts[j] > 0, "Dataset: class " + std::to_string(j) + " has no examples");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// SplitMix64 finalizer: decorrelates seeds derived from (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Gaussian classes with small separation relative to their spread.
struct SynthConfig {
  std::vector<std::size_t> class_counts = {24, 100, 100};
  std::size_t input_dim = 8;
  double class_separation = 2.0;
  double intra_spread = 1.5;
  std::uint64_t seed = 0;

  std::size_t num_classes() const noexcept { return class_counts.size(); }

  void validate() const {
    detail::require(class_counts.size() >= 2, "SynthConfig: need at least two classes");
    for (auto c : class_counts) detail::require(c > 0, "SynthConfig: class counts must be positive");
    detail::require(input_dim >= class_counts.size(),
                    "SynthConfig: input_dim must be at least the number of classes");
    detail::require(std::isfinite(class_separation) && class_separation > 0.0,
                    "SynthConfig: class separation must be positive");
    detail::require(std::isfinite(intra_spread) && intra_spread > 0.0,
                    "SynthConfig: intra-class spread must be positive");
  }
};

/// Class means at the vertices of a regular simplex, every pair exactly
/// `separation` apart, centered on the origin.
inline Matrix simplex_means(std::size_t num_classes, std::size_t dim, double separation) {
  detail::require(dim >= num_classes, "simplex_means: dim must be >= number of classes");
  const double scale = separation / std::sqrt(2.0);
  Matrix means(num_classes, dim);
  for (std::size_t j = 0; j < num_classes; ++j) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      means(j, k) = scale * ((j == k ? 1.0 : 0.0) - 1.0 / static_cast<double>(num_classes));
    }
  }
  return means;
}

inline std::vector<std::string> default_class_names(std::size_t n) {
  if (n == 3) return {"critical", "normal", "confusable"};
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n; ++j) names.push_back("class" + std::to_string(j));
  return names;
}

/// Rows are grouped by class in label order. Each class draws from its own
/// stream, so a class's samples depend only on (seed, class index, count).
inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.num_classes();
  const Matrix means = simplex_means(n, cfg.input_dim, cfg.class_separation);
  const std::size_t total = std::accumulate(cfg.class_counts.begin(), cfg.class_counts.end(),
                                            std::size_t{0});
  Dataset ds{Matrix(total, cfg.input_dim), {}, default_class_names(n)};
  ds.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::mt19937_64 rng(derive_seed(cfg.seed, j));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < cfg.class_counts[j]; ++i, ++row) {
      auto x = ds.features.row(row);
      for (std::size_t k = 0; k < cfg.input_dim; ++k) {
        x[k] = means(j, k) + cfg.intra_spread * noise(rng);
      }
      ds.labels.push_back(j);
    }
  }
  return ds;
}

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold partition. Each class is shuffled and dealt round-robin
/// to the folds, continuing from where the previous class stopped so fold
/// sizes stay within one of each other.
inline std::vector<FoldSplit> kfold(std::span<const std::size_t> labels, std::size_t num_classes,
                                    std::size_t k, std::uint64_t seed) {
  detail::require(k >= 2, "kfold: k must be at least 2");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    detail::require(labels[i] < num_classes, "kfold: label out of range");
    by_class[labels[i]].push_back(i);
  }
  for (std::size_t j = 0; j < num_classes; ++j) {
    detail::require(by_class[j].size() >= k, "kfold: class " + std::to_string(j) + " has " +
                                                 std::to_string(by_class[j].size()) +
                                                 " examples, fewer than k = " + std::to_string(k));
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> tests(k);
  std::size_t next_fold = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto idx : members) {
      tests[next_fold].push_back(idx);
      next_fold = (next_fold + 1) % k;
    }
  }

  std::vector<FoldSplit> folds(k);
  std::vector<std::size_t> owner(labels.size());
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(tests[f].begin(), tests[f].end());
    for (auto idx : tests[f]) owner[idx] = f;
    folds[f].test = std::move(tests[f]);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      if (owner[i] != f) folds[f].train.push_back(i);
    }
  }
  return folds;
}

inline std::vector<FoldSplit> kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return kfold(ds.labels, ds.num_classes(), k, seed);
}

// --- CSV: header "label,f0,f1,...", integer class labels -------------------

inline Dataset read_dataset_csv(std::istream& in, const std::string& source) {
  const auto table = csv::read(in, source, true);
  const auto& header = table.header;
  if (header.size() < 2 || header.front() != "label") {
    throw ParseError(source, 1, "header must be 'label,f0,f1,...'");
  }
  if (table.rows.empty()) throw ParseError(source, 0, "no data rows");

  const std::size_t dim = header.size() - 1;
  Dataset ds{Matrix(table.rows.size(), dim), {}, {}};
  std::size_t max_label = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto label = csv::parse_integer(row.cells[0]);
    if (!label || *label < 0) {
      throw ParseError(source, row.line, "unknown label '" + row.cells[0] + "'");
    }
    ds.labels.push_back(static_cast<std::size_t>(*label));
    max_label = std::max(max_label, ds.labels.back());
    for (std::size_t k = 0; k < dim; ++k) {
      const auto value = csv::parse_double(row.cells[k + 1]);
      if (!value || !std::isfinite(*value)) {
        throw ParseError(source, row.line, "malformed value '" + row.cells[k + 1] + "'");
      }
      ds.features(r, k) = *value;
    }
  }
  ds.class_names = default_class_names(max_label + 1);
  const auto counts = ds.class_counts();
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) {
      throw ParseError(source, 0, "class " + std::to_string(j) + " has no examples");
    }
  }
  return ds;
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  return read_dataset_csv(in, path);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  std::vector<std::string> cells{"label"};
  for (std::size_t k = 0; k < ds.input_dim(); ++k) cells.push_back("f" + std::to_string(k));
  csv::write_row(out, cells);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    cells.assign(1, std::to_string(ds.labels[i]));
    for (double v : ds.features.row(i)) cells.push_back(csv::format_double(v));
    csv::write_row(out, cells);
  }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset_csv(out, ds);
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace dcsl
