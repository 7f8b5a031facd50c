#pragma once

// Command-line front end. `run` is separate from main() so tests can drive
// every subcommand in-process.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dcsl/costs.hpp"
#include "dcsl/csv.hpp"
#include "dcsl/data.hpp"
#include "dcsl/error.hpp"
#include "dcsl/eval.hpp"
#include "dcsl/experiment.hpp"
#include "dcsl/json.hpp"
#include "dcsl/trainer.hpp"

namespace dcsl::cli {

enum ExitCode : int { kSuccess = 0, kValidationError = 1, kRuntimeError = 2 };

struct RunConfig {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "dcsl_out";
  std::size_t folds = 5;

  // Data source: a CSV file, or synthetic parameters (the default).
  std::string data_path;
  std::vector<std::size_t> counts = {24, 100, 100};
  std::size_t in_dim = 8;
  double separation = 2.0;
  double spread = 1.5;

  std::string loss_mode = "dcsl";
  std::string cost_matrix = "clinical-default";
  std::string class_weights = "inverse";
  std::string center_weighting = "both";
  std::string score_transform = "matrix_product";
  bool costs_at_test = true;
  double lambda_c = kDefaultCenterLossWeight;
  double alpha = 1.0;
  double lr = 1e-3;
  std::size_t epochs = 40;
  std::size_t batch = 32;
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 2;

  std::string model_path;  // export-embeddings
};

namespace detail {

inline std::size_t thread_budget() {
  if (const char* env = std::getenv("DCSL_THREADS")) {
    const auto n = csv::parse_integer(env);
    if (n && *n >= 1) return static_cast<std::size_t>(*n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Flat key=value lines; '#' starts a comment. Keys are flag names without
/// the leading dashes ("lambda-c" or "lambda_c").
inline std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto text = csv::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, line_no, "expected key=value");
    std::string key(csv::trim(text.substr(0, eq)));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string value(csv::trim(text.substr(eq + 1)));
    if (key.empty() || key == "config") throw ParseError(path, line_no, "invalid key");
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

// Config-file tokens go right after the subcommand so explicit flags, which
// come later, win under the take-last policy.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  auto tokens = config_tokens(path);
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

inline Dataset load_data(const RunConfig& rc) {
  if (!rc.data_path.empty()) return load_csv(rc.data_path);
  SynthConfig sc;
  sc.class_counts = rc.counts;
  sc.input_dim = rc.in_dim;
  sc.class_separation = rc.separation;
  sc.intra_spread = rc.spread;
  sc.seed = rc.seed;
  return generate(sc);
}

inline TrainConfig train_config(const RunConfig& rc, std::size_t num_classes) {
  TrainConfig c;
  const auto mode = parse_loss_mode(rc.loss_mode);
  if (!mode) throw InvalidInput("unknown loss mode '" + rc.loss_mode + "'");
  c.loss_mode = *mode;
  c.center_loss_weight = rc.lambda_c;
  c.center_alpha = rc.alpha;
  c.learning_rate = rc.lr;
  c.epochs = rc.epochs;
  c.batch_size = rc.batch;
  c.seed = rc.seed;
  c.costs_at_test = rc.costs_at_test;
  c.hidden = rc.hidden;
  c.feature_dim = rc.feature_dim;

  if (rc.class_weights == "frequency") c.class_weight_mode = ClassWeightMode::frequency;
  else if (rc.class_weights == "inverse") c.class_weight_mode = ClassWeightMode::inverse_frequency;
  else if (rc.class_weights == "unit") c.class_weight_mode = ClassWeightMode::unit;
  else throw InvalidInput("unknown class weight mode '" + rc.class_weights + "'");

  if (rc.center_weighting == "none") c.center_weighting = CenterWeighting::none;
  else if (rc.center_weighting == "delta") c.center_weighting = CenterWeighting::delta;
  else if (rc.center_weighting == "update") c.center_weighting = CenterWeighting::update;
  else if (rc.center_weighting == "both") c.center_weighting = CenterWeighting::both;
  else throw InvalidInput("unknown center weighting '" + rc.center_weighting + "'");

  if (rc.score_transform == "matrix_product") c.score_transform = ScoreTransform::matrix_product;
  else if (rc.score_transform == "label_row") c.score_transform = ScoreTransform::label_row;
  else throw InvalidInput("unknown score transform '" + rc.score_transform + "'");

  if (rc.cost_matrix != "clinical-default") {
    c.score_costs = ScoreCostMatrix(load_cost_matrix_csv(rc.cost_matrix));
  } else if (c.loss_mode == LossMode::dcsl && num_classes == 3) {
    c.score_costs = default_clinical_score_matrix();
  }
  c.validate();
  return c;
}

inline std::filesystem::path prepare_out_dir(const RunConfig& rc) {
  std::filesystem::path dir(rc.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + rc.out_dir + ": " + ec.message());
  return dir;
}

inline void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::vector<std::string> cells{"truth"};
  for (std::size_t q = 0; q < cm.num_classes(); ++q) cells.push_back("pred" + std::to_string(q));
  csv::write_row(out, cells);
  for (std::size_t p = 0; p < cm.num_classes(); ++p) {
    cells.assign(1, std::to_string(p));
    for (std::size_t q = 0; q < cm.num_classes(); ++q) cells.push_back(std::to_string(cm.at(p, q)));
    csv::write_row(out, cells);
  }
}

// Smallest class by count; ties go to the lower index.
inline std::size_t minority_class(const Dataset& ds) {
  const auto counts = ds.class_counts();
  return static_cast<std::size_t>(std::min_element(counts.begin(), counts.end()) - counts.begin());
}

inline Json crossval_json(const CrossvalResult& r) {
  Json folds = Json::array();
  for (const auto& f : r.folds) {
    folds.push_back(f.report ? Json{{"fold", f.fold}, {"seed", f.seed}, {"metrics", to_json(*f.report)}}
                             : Json{{"fold", f.fold}, {"seed", f.seed}, {"error", f.error}});
  }
  return Json{{"folds", std::move(folds)}, {"aggregate", to_json(r.summary)}};
}

}  // namespace detail

inline int cmd_gen_data(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = detail::load_data(rc);
  const auto dir = detail::prepare_out_dir(rc);
  const auto path = dir / "dataset.csv";
  save_csv(ds, path.string());
  out << "wrote " << ds.size() << " rows to " << path.string() << "\n";
  const auto counts = ds.class_counts();
  for (std::size_t j = 0; j < counts.size(); ++j) {
    out << "  class " << j << " (" << ds.class_names[j] << "): " << counts[j] << "\n";
  }
  return kSuccess;
}

inline int cmd_train(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = detail::load_data(rc);
  const TrainConfig config = detail::train_config(rc, ds.num_classes());
  const auto dir = detail::prepare_out_dir(rc);
  const TrainState state = fit(ds, config);

  write_json_file(model_to_json(state), (dir / "model.json").string());
  {
    std::ofstream hist(dir / "history.csv");
    if (!hist) throw std::runtime_error("cannot write " + (dir / "history.csv").string());
    csv::write_row(hist, {"epoch", "loss", "classification_loss", "center_loss", "train_accuracy"});
    for (std::size_t e = 0; e < state.history.size(); ++e) {
      const auto& h = state.history[e];
      csv::write_row(hist, {std::to_string(e + 1), csv::format_double(h.loss),
                            csv::format_double(h.classification_loss),
                            csv::format_double(h.center_loss), csv::format_double(h.train_accuracy)});
    }
  }
  const auto pred = predict(state, ds.features);
  const auto report = metrics(confusion(pred.labels, ds.labels, ds.num_classes()));
  write_json_file(to_json(report), (dir / "train_metrics.json").string());
  out << "trained " << to_string(config.loss_mode) << " for " << config.epochs
      << " epochs; training accuracy " << report.accuracy << "\n";
  return kSuccess;
}

inline int cmd_crossval(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = detail::load_data(rc);
  const TrainConfig config = detail::train_config(rc, ds.num_classes());
  const auto dir = detail::prepare_out_dir(rc);
  const auto result = cross_validate(ds, config, rc.folds, rc.seed, detail::thread_budget());

  for (const auto& f : result.folds) {
    const auto stem = "fold_" + std::to_string(f.fold);
    if (f.report) {
      write_json_file(to_json(*f.report), (dir / (stem + ".json")).string());
      detail::write_confusion_csv(f.report->confusion, dir / (stem + "_confusion.csv"));
    } else {
      write_json_file(Json{{"fold", f.fold}, {"error", f.error}}, (dir / (stem + ".json")).string());
    }
  }
  write_json_file(to_json(result.summary), (dir / "aggregate.json").string());

  const auto& s = result.summary;
  out << rc.folds << "-fold " << to_string(config.loss_mode) << ": accuracy " << s.accuracy.mean
      << " +- " << s.accuracy.sd << ", f1 " << s.f1_macro.mean << " +- " << s.f1_macro.sd << "\n";
  if (!result.ok()) {
    for (const auto& f : result.folds) {
      if (!f.report) out << "fold " << f.fold << " failed: " << f.error << "\n";
    }
    return kRuntimeError;
  }
  return kSuccess;
}

inline int cmd_ablate(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = detail::load_data(rc);
  const TrainConfig base = detail::train_config(rc, ds.num_classes());
  TrainConfig with_costs = base;
  if (!with_costs.score_costs) {
    if (ds.num_classes() != 3) {
      throw UnsupportedConfiguration("ablation on " + std::to_string(ds.num_classes()) +
                                     " classes needs --cost-matrix for the dcsl arm");
    }
    with_costs.score_costs = default_clinical_score_matrix();
  }
  const auto dir = detail::prepare_out_dir(rc);
  const auto arms = run_ablation(ds, with_costs, rc.folds, rc.seed, detail::thread_budget());
  const std::size_t minority = detail::minority_class(ds);

  std::ofstream table(dir / "ablation.csv");
  if (!table) throw std::runtime_error("cannot write " + (dir / "ablation.csv").string());
  csv::write_row(table, {"mode", "accuracy", "precision", "sensitivity", "f1", "minority_sensitivity"});
  Json summary = Json::object();
  bool ok = true;
  for (const auto& arm : arms) {
    const auto& s = arm.result.summary;
    const std::string name(to_string(arm.mode));
    csv::write_row(table, {name, csv::format_double(s.accuracy.mean),
                           csv::format_double(s.precision_macro.mean),
                           csv::format_double(s.sensitivity_macro.mean),
                           csv::format_double(s.f1_macro.mean),
                           csv::format_double(s.sensitivity_per_class[minority].mean)});
    detail::write_confusion_csv(s.pooled, dir / ("confusion_" + name + ".csv"));
    summary[name] = detail::crossval_json(arm.result);
    out << name << ": accuracy " << s.accuracy.mean << ", minority sensitivity "
        << s.sensitivity_per_class[minority].mean << "\n";
    ok = ok && arm.result.ok();
  }
  write_json_file(summary, (dir / "ablation.json").string());
  return ok ? kSuccess : kRuntimeError;
}

inline int cmd_export_embeddings(const RunConfig& rc, std::ostream& out) {
  const Dataset ds = detail::load_data(rc);
  const TrainState state = rc.model_path.empty()
                               ? fit(ds, detail::train_config(rc, ds.num_classes()))
                               : model_from_json(read_json_file(rc.model_path));
  if (state.network.input_dim() != ds.input_dim()) {
    throw InvalidInput("model expects " + std::to_string(state.network.input_dim()) +
                       " input columns, dataset has " + std::to_string(ds.input_dim()));
  }
  const Matrix features = embed(state, ds.features);
  const auto dir = detail::prepare_out_dir(rc);
  const auto path = dir / "embeddings.csv";
  std::ofstream csv_out(path);
  if (!csv_out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::vector<std::string> cells{"id", "label"};
  for (std::size_t k = 0; k < features.cols(); ++k) cells.push_back("f" + std::to_string(k));
  csv::write_row(csv_out, cells);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    cells = {std::to_string(i), std::to_string(ds.labels[i])};
    for (double v : features.row(i)) cells.push_back(csv::format_double(v));
    csv::write_row(csv_out, cells);
  }
  out << "wrote " << ds.size() << " embeddings (d=" << features.cols() << ") to " << path.string()
      << "\n";
  return kSuccess;
}

inline void add_common_options(CLI::App& sub, RunConfig& rc, bool training) {
  sub.add_option("--config", rc.config_path, "key=value file; command-line flags take precedence");
  sub.add_option("--seed", rc.seed, "master random seed");
  sub.add_option("--out", rc.out_dir, "output directory");
  sub.add_option("--counts", rc.counts, "synthetic class counts")->delimiter(',');
  sub.add_option("--in-dim", rc.in_dim, "synthetic input dimension");
  sub.add_option("--separation", rc.separation, "distance between synthetic class means");
  sub.add_option("--spread", rc.spread, "within-class standard deviation");
  if (!training) return;

  auto* data = sub.add_option("--data", rc.data_path, "dataset CSV (label,f0,f1,...)");
  for (const char* synth : {"--counts", "--in-dim", "--separation", "--spread"}) {
    data->excludes(sub.get_option(synth));
  }
  sub.add_option("--folds", rc.folds, "cross-validation folds")->check(CLI::Range(2, 1000));
  sub.add_option("--loss-mode", rc.loss_mode, "softmax | softmax_cl | softmax_ccl | dcsl");
  sub.add_option("--cost-matrix", rc.cost_matrix, "score cost CSV path or clinical-default");
  sub.add_option("--class-weights", rc.class_weights, "frequency | inverse | unit");
  sub.add_option("--center-weighting", rc.center_weighting, "none | delta | update | both");
  sub.add_option("--score-transform", rc.score_transform, "matrix_product | label_row");
  sub.add_flag("--costs-at-test,!--no-costs-at-test", rc.costs_at_test,
               "apply score costs at prediction time (dcsl)");
  sub.add_option("--lambda-c", rc.lambda_c, "center-loss weight");
  sub.add_option("--alpha", rc.alpha, "center update rate");
  sub.add_option("--lr", rc.lr, "Adam learning rate");
  sub.add_option("--epochs", rc.epochs, "training epochs");
  sub.add_option("--batch", rc.batch, "mini-batch size");
  sub.add_option("--hidden", rc.hidden, "hidden layer widths")->delimiter(',');
  sub.add_option("--feature-dim", rc.feature_dim, "deep feature dimension");
}

/// Parses `args` (without the program name) and runs the chosen command.
/// Returns the process exit code.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  RunConfig rc;
  CLI::App app{"Discriminative cost-sensitive learning: training, cross-validation, ablation", "dcsl"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
  auto* train = app.add_subcommand("train", "train one model on the full dataset");
  auto* crossval = app.add_subcommand("crossval", "stratified k-fold cross-validation");
  auto* ablate = app.add_subcommand("ablate", "cross-validate all four loss modes");
  auto* embed_cmd = app.add_subcommand("export-embeddings", "write deep features per example");
  add_common_options(*gen, rc, false);
  for (auto* sub : {train, crossval, ablate, embed_cmd}) add_common_options(*sub, rc, true);
  embed_cmd->add_option("--model", rc.model_path, "model.json from `train`; trains if omitted");
  for (auto* sub : {gen, train, crossval, ablate, embed_cmd}) {
    sub->callback([&rc, sub] { rc.command = sub->get_name(); });
  }

  try {
    args = detail::expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out, help_err;
    const int code = app.exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return code == 0 ? kSuccess : kValidationError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }

  try {
    if (rc.command == "gen-data") return cmd_gen_data(rc, out);
    if (rc.command == "train") return cmd_train(rc, out);
    if (rc.command == "crossval") return cmd_crossval(rc, out);
    if (rc.command == "ablate") return cmd_ablate(rc, out);
    if (rc.command == "export-embeddings") return cmd_export_embeddings(rc, out);
    err << "error: no command\n";
    return kValidationError;
  } catch (const TrainingDivergence& e) {
    err << "training diverged: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::invalid_argument& e) {
    // InvalidInput, UnsupportedConfiguration, DegenerateSample
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace dcsl::cli
