#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dcsl/data.hpp"
#include "dcsl/eval.hpp"
#include "dcsl/trainer.hpp"

namespace dcsl {

inline constexpr std::array<LossMode, 4> kAblationModes{LossMode::softmax, LossMode::softmax_cl,
                                                        LossMode::softmax_ccl, LossMode::dcsl};

inline std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::softmax: return "softmax";
    case LossMode::softmax_cl: return "softmax_cl";
    case LossMode::softmax_ccl: return "softmax_ccl";
    case LossMode::dcsl: return "dcsl";
  }
  return "unknown";
}

struct FoldOutcome {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;  // empty if training failed
  std::string error;
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single fold
};

struct CrossvalSummary {
  std::size_t completed_folds = 0;
  MetricSummary accuracy;
  MetricSummary precision_macro;
  MetricSummary sensitivity_macro;
  MetricSummary f1_macro;
  std::vector<MetricSummary> sensitivity_per_class;
  ConfusionMatrix pooled;  // sum of the fold confusion matrices
};

struct CrossvalResult {
  std::vector<FoldOutcome> folds;
  CrossvalSummary summary;

  bool ok() const {
    return std::all_of(folds.begin(), folds.end(), [](const auto& f) { return f.report.has_value(); });
  }
};

// Training seed for fold `f`; identical across loss modes so ablation arms
// start from the same initial network.
inline std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t fold) {
  return derive_seed(master_seed, 100 + fold);
}

inline std::uint64_t split_seed(std::uint64_t master_seed) { return derive_seed(master_seed, 99); }

inline MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

inline CrossvalSummary summarize(const std::vector<FoldOutcome>& folds, std::size_t num_classes) {
  CrossvalSummary out;
  out.pooled = ConfusionMatrix(num_classes);
  std::vector<double> acc, prec, sens, f1;
  std::vector<std::vector<double>> per_class(num_classes);
  for (const auto& f : folds) {
    if (!f.report) continue;
    ++out.completed_folds;
    acc.push_back(f.report->accuracy);
    prec.push_back(f.report->precision_macro);
    sens.push_back(f.report->sensitivity_macro);
    f1.push_back(f.report->f1_macro);
    for (std::size_t j = 0; j < num_classes; ++j) {
      per_class[j].push_back(f.report->sensitivity_per_class[j]);
    }
    out.pooled += f.report->confusion;
  }
  out.accuracy = summarize(acc);
  out.precision_macro = summarize(prec);
  out.sensitivity_macro = summarize(sens);
  out.f1_macro = summarize(f1);
  for (const auto& v : per_class) out.sensitivity_per_class.push_back(summarize(v));
  return out;
}

/// Runs `jobs` indexed tasks on up to `threads` workers.
template <class Task>
void parallel_for(std::size_t jobs, std::size_t threads, Task&& task) {
  threads = std::max<std::size_t>(1, std::min(threads, jobs));
  if (threads == 1) {
    for (std::size_t i = 0; i < jobs; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < jobs; i = next++) task(i);
    });
  }
}

/// Stratified k-fold cross-validation. Each fold is trained independently;
/// a failing fold records its error and the others still complete.
inline CrossvalResult cross_validate(const Dataset& ds, const TrainConfig& config, std::size_t k,
                                     std::uint64_t master_seed, std::size_t threads = 1) {
  ds.validate();
  config.validate();
  const auto splits = kfold(ds, k, split_seed(master_seed));
  CrossvalResult result;
  result.folds.resize(k);
  parallel_for(k, threads, [&](std::size_t f) {
    FoldOutcome& out = result.folds[f];
    out.fold = f;
    out.seed = fold_seed(master_seed, f);
    try {
      TrainConfig fold_config = config;
      fold_config.seed = out.seed;
      const Dataset train = ds.subset(splits[f].train);
      const Dataset test = ds.subset(splits[f].test);
      const TrainState state = fit(train, fold_config);
      const Prediction pred = predict(state, test.features);
      out.report = metrics(confusion(pred.labels, test.labels, ds.num_classes()));
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  result.summary = summarize(result.folds, ds.num_classes());
  return result;
}

struct AblationArm {
  LossMode mode;
  CrossvalResult result;
};

/// The four loss modes under identical folds and per-fold seeds.
inline std::vector<AblationArm> run_ablation(const Dataset& ds, const TrainConfig& base,
                                             std::size_t k, std::uint64_t master_seed,
                                             std::size_t threads = 1) {
  std::vector<AblationArm> arms;
  for (LossMode mode : kAblationModes) {
    TrainConfig config = base;
    config.loss_mode = mode;
    arms.push_back({mode, cross_validate(ds, config, k, master_seed, threads)});
  }
  return arms;
}

}  // namespace dcsl
