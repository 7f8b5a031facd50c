// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dcsl/experiment.hpp"
#include "dcsl_cli.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/test_support.hpp"

using namespace dcsl;
using dcsl::testing::random_labels;
using dcsl::testing::random_matrix;
using dcsl::testing::random_size;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  auto p = dcsl::testing::random_positive(rng, n, 0.0, 1.0);
  double s = 0.0;
  for (double v : p) s += v;
  for (double& v : p) v /= s;
  return p;
}

Verdict gradients() {
  double worst = 0.0;
  std::string worst_loss;
  std::size_t count = 0;
  const auto start = std::chrono::steady_clock::now();
  for (auto which : dcsl::testing::kAllLosses) {
    for (std::uint64_t i = 0; i < 100; ++i) {
      const double err = dcsl::testing::gradcheck_instance(which, 7919 * i + 13);
      ++count;
      if (!(err <= worst)) {
        worst = err;
        worst_loss = std::string(dcsl::testing::name(which));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-5 && secs < 60.0,
          fmt("max relative error %.2e over %.0f instances (h=1e-6, %.1f s)", worst, double(count), secs) +
              ", worst: " + worst_loss};
}

Verdict center_updates() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  bool invariants = true;
  const CenterWeighting modes[] = {CenterWeighting::none, CenterWeighting::delta, CenterWeighting::update,
                                   CenterWeighting::both};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = random_size(rng, 2, 6);
    const std::size_t d = random_size(rng, 1, 5);
    const std::size_t m = random_size(rng, 1, 16);
    const Matrix centers = random_matrix(rng, n, d, -3.0, 3.0);
    const Matrix x = random_matrix(rng, m, d, -3.0, 3.0);
    const auto y = random_labels(rng, m, n);
    const auto w = dcsl::testing::random_positive(rng, n);
    const double alpha = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    for (auto mode : modes) {
      for (bool weighted : {false, true}) {
        const std::vector<double> wv = weighted ? w : std::vector<double>{};
        CenterBank bank{centers, alpha, mode};
        step_centers(bank, x, y, wv);
        const Matrix expected = dcsl::testing::naive_center_step(centers, x, y, wv, alpha, mode);
        for (std::size_t k = 0; k < expected.size(); ++k) {
          worst = std::max(worst, std::abs(bank.centers.data()[k] - expected.data()[k]));
        }
        std::set<std::size_t> present(y.begin(), y.end());
        for (std::size_t j = 0; j < n; ++j) {
          if (present.contains(j)) continue;
          for (std::size_t k = 0; k < d; ++k) invariants = invariants && bank.centers(j, k) == centers(j, k);
        }
        CenterBank fixed{centers, alpha, mode};
        step_centers(fixed, gather_rows(centers, y), y, wv);
        invariants = invariants && fixed.centers == centers;
      }
    }
  }
  return {worst <= 1e-12 && invariants,
          fmt("max deviation from oracle %.2e over 1000 batches x 8 weightings", worst) +
              (invariants ? "; fixed point and absent-class invariants exact" : "; INVARIANT BROKEN")};
}

Verdict reductions() {
  bool ok = true;
  std::size_t compared = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    const Dataset ds = generate(sc);
    TrainConfig base;
    base.seed = seed;

    TrainConfig soft = base;
    soft.loss_mode = LossMode::softmax;
    TrainConfig reduced = base;
    reduced.loss_mode = LossMode::dcsl;
    reduced.score_costs = ScoreCostMatrix::identity(3);
    reduced.class_weight_mode = ClassWeightMode::unit;
    reduced.center_loss_weight = 0.0;
    const auto a = fit(ds, soft);
    const auto b = fit(ds, reduced);
    ok = ok && a.network == b.network;
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      ok = ok && a.history[e].loss == b.history[e].loss &&
           a.history[e].classification_loss == b.history[e].classification_loss;
    }

    TrainConfig cl = base;
    cl.loss_mode = LossMode::softmax_cl;
    TrainConfig ccl = base;
    ccl.loss_mode = LossMode::softmax_ccl;
    ccl.class_weight_mode = ClassWeightMode::unit;
    const auto c = fit(ds, cl);
    const auto d = fit(ds, ccl);
    ok = ok && c.network == d.network && c.centers == d.centers && c.history == d.history;
    compared += 2;
  }
  return {ok, fmt("%.0f reduced/base training pairs bitwise identical (losses, parameters, centers)",
                  double(compared))};
}

Verdict risk_decisions() {
  std::mt19937_64 rng(4);
  std::size_t mismatches = 0, argmax_mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = random_size(rng, 2, 8);
    Matrix c = random_matrix(rng, n, n, 0.0, 10.0);
    for (std::size_t i = 0; i < n; ++i) c(i, i) = 0.0;
    const auto p = random_distribution(rng, n);
    std::size_t best = 0;
    double best_risk = INFINITY;
    for (std::size_t d = 0; d < n; ++d) {
      double r = 0.0;
      for (std::size_t q = 0; q < n; ++q) r += c(d, q) * p[q];
      if (r < best_risk) {
        best_risk = r;
        best = d;
      }
    }
    mismatches += min_risk_decision(p, LossCostMatrix(c)) != best;
    const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    argmax_mismatches += min_risk_decision(p, LossCostMatrix::zero_one(n)) != top;
  }
  return {mismatches == 0 && argmax_mismatches == 0,
          fmt("%.0f exhaustive-argmin and %.0f zero-one-argmax mismatches over 10000 instances",
              double(mismatches), double(argmax_mismatches))};
}

Verdict scaled_identity() {
  std::mt19937_64 rng(5);
  std::size_t flips = 0;
  bool identity_exact = true;
  for (double scale : {0.5, 1.0, 2.0, 10.0}) {
    Matrix xi = Matrix::identity(4);
    for (double& v : xi.data()) v *= scale;
    const ScoreCostMatrix costs(xi);
    for (int trial = 0; trial < 1000; ++trial) {
      const Matrix f = random_matrix(rng, 1, 4, -10.0, 10.0);
      const Matrix o = apply_score_costs(f, costs);
      flips += detail::argmax(f.row(0)) != detail::argmax(o.row(0));
      if (scale == 1.0) identity_exact = identity_exact && o == f;
    }
  }
  return {flips == 0 && identity_exact,
          fmt("%.0f argmax changes over 4 scales x 1000 logit vectors; identity ", double(flips)) +
              (identity_exact ? "bitwise exact" : "NOT exact")};
}

Verdict benchmark() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> dcsl_sens, soft_sens;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    const Dataset ds = generate(sc);
    TrainConfig cfg;
    for (LossMode mode : {LossMode::softmax, LossMode::dcsl}) {
      cfg.loss_mode = mode;
      const auto r = cross_validate(ds, cfg, 5, seed, 1);
      if (!r.ok()) return {false, "a fold failed: " + r.folds[0].error};
      for (const auto& f : r.folds) {
        (mode == LossMode::dcsl ? dcsl_sens : soft_sens).push_back(f.report->sensitivity_per_class[0]);
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double md = 0.0, ms = 0.0;
  for (std::size_t i = 0; i < dcsl_sens.size(); ++i) {
    md += dcsl_sens[i] / static_cast<double>(dcsl_sens.size());
    ms += soft_sens[i] / static_cast<double>(soft_sens.size());
  }
  const auto t = paired_ttest(dcsl_sens, soft_sens);
  return {md - ms >= 0.05 && t.p_value < 0.05 && secs < 300.0,
          fmt("minority sensitivity dcsl %.3f vs softmax %.3f (gap %.3f), ", md, ms, md - ms) +
              fmt("paired t=%.2f p=%.2e over 50 folds, %.1f s", t.t, t.p_value, secs)};
}

Verdict metric_consistency() {
  std::mt19937_64 rng(7);
  double worst = 0.0, identity = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = random_size(rng, 2, 8);
    ConfusionMatrix cm(n);
    std::uniform_int_distribution<std::size_t> count(0, 40);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < n; ++q) cm.at(p, q) = count(rng);
    }
    if (cm.total() == 0) cm.at(0, 0) = 1;
    const auto r = metrics(cm);
    const auto naive = dcsl::testing::naive_metrics(cm);
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    track(r.accuracy, naive.accuracy);
    track(r.precision_macro, naive.precision_macro);
    track(r.sensitivity_macro, naive.sensitivity_macro);
    track(r.f1_macro, naive.f1_macro);
    for (std::size_t j = 0; j < n; ++j) {
      track(r.precision_per_class[j], naive.precision[j]);
      track(r.sensitivity_per_class[j], naive.sensitivity[j]);
      track(r.f1_per_class[j], naive.f1[j]);
    }
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      weighted += naive.sensitivity[j] * static_cast<double>(cm.row_sum(j)) / static_cast<double>(cm.total());
    }
    identity = std::max(identity, std::abs(r.accuracy - weighted));
  }
  return {worst <= 1e-12 && identity <= 1e-12,
          fmt("max deviation %.2e from recomputation, accuracy vs weighted sensitivity %.2e (1000 matrices)",
              worst, identity)};
}

bool same_files(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    ++n;
    if (dcsl::testing::read_file(entry.path()) != dcsl::testing::read_file(b / entry.path().filename())) {
      return false;
    }
  }
  return n > 0;
}

Verdict partitions_and_reproducibility() {
  std::mt19937_64 rng(8);
  bool ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = random_size(rng, 2, 5);
    std::vector<std::size_t> labels;
    for (std::size_t j = 0; j < n; ++j) labels.insert(labels.end(), random_size(rng, 5, 60), j);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto folds = kfold(labels, n, 5, rng());
    std::vector<int> seen(labels.size(), 0);
    for (const auto& f : folds) {
      std::set<std::size_t> test(f.test.begin(), f.test.end());
      for (auto i : f.train) ok = ok && !test.contains(i);
      ok = ok && f.train.size() + f.test.size() == labels.size();
      for (auto i : f.test) ++seen[i];
    }
    for (int s : seen) ok = ok && s == 1;
    for (std::size_t j = 0; j < n; ++j) {
      const double share = static_cast<double>(std::count(labels.begin(), labels.end(), j)) / 5.0;
      for (const auto& f : folds) {
        const auto c = std::count_if(f.test.begin(), f.test.end(), [&](auto i) { return labels[i] == j; });
        ok = ok && std::abs(static_cast<double>(c) - share) <= 1.0;
      }
    }
  }

  dcsl::testing::TempDir a("acc_a"), b("acc_b");
  bool reproducible = true;
  for (const auto* dir : {&a, &b}) {
    std::ostringstream out, err;
    const std::vector<std::vector<std::string>> runs = {
        {"gen-data", "--seed", "5", "--out", dir->str()},
        {"crossval", "--seed", "5", "--epochs", "5", "--out", dir->str()},
        {"ablate", "--seed", "5", "--epochs", "3", "--folds", "3", "--out", dir->str()},
        {"export-embeddings", "--seed", "5", "--epochs", "3", "--out", dir->str()}};
    for (const auto& args : runs) reproducible = reproducible && dcsl::cli::run(args, out, err) == 0;
  }
  reproducible = reproducible && same_files(a.path(), b.path());
  return {ok && reproducible, std::string("kfold properties on 100 datasets ") + (ok ? "hold" : "VIOLATED") +
                                  "; repeated CLI runs " +
                                  (reproducible ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"AC1 gradient check", gradients},
      {"AC2 center update oracle", center_updates},
      {"AC3 reduction lattice", reductions},
      {"AC4 minimum-risk decision", risk_decisions},
      {"AC5 scaled identity costs", scaled_identity},
      {"AC6 minority sensitivity benchmark", benchmark},
      {"AC7 metric consistency", metric_consistency},
      {"AC8 partitions and reproducibility", partitions_and_reproducibility},
  };
  int failures = 0;
  for (const auto& [label, check] : criteria) {
    Verdict v{false, ""};
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", v.pass ? "PASS" : "FAIL", label.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
