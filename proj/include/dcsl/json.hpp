#pragma once

// JSON views of reports and trained models. Requires nlohmann/json.

#include <cstddef>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dcsl/costs.hpp"
#include "dcsl/eval.hpp"
#include "dcsl/experiment.hpp"
#include "dcsl/trainer.hpp"

namespace dcsl {

using Json = nlohmann::json;

inline Json confusion_to_json(const ConfusionMatrix& cm) {
  Json rows = Json::array();
  for (std::size_t p = 0; p < cm.num_classes(); ++p) {
    Json row = Json::array();
    for (std::size_t q = 0; q < cm.num_classes(); ++q) row.push_back(cm.at(p, q));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Flat object: accuracy, {precision,sensitivity,f1}_{macro,weighted},
/// sensitivity_per_class, confusion.
inline Json to_json(const MetricsReport& r) {
  return Json{{"accuracy", r.accuracy},
              {"precision_macro", r.precision_macro},
              {"sensitivity_macro", r.sensitivity_macro},
              {"f1_macro", r.f1_macro},
              {"precision_weighted", r.precision_weighted},
              {"sensitivity_weighted", r.sensitivity_weighted},
              {"f1_weighted", r.f1_weighted},
              {"sensitivity_per_class", r.sensitivity_per_class},
              {"confusion", confusion_to_json(r.confusion)}};
}

inline Json to_json(const MetricSummary& s) { return Json{{"mean", s.mean}, {"sd", s.sd}}; }

inline Json to_json(const CrossvalSummary& s) {
  Json per_class = Json::array();
  for (const auto& m : s.sensitivity_per_class) per_class.push_back(to_json(m));
  return Json{{"completed_folds", s.completed_folds},
              {"accuracy", to_json(s.accuracy)},
              {"precision_macro", to_json(s.precision_macro)},
              {"sensitivity_macro", to_json(s.sensitivity_macro)},
              {"f1_macro", to_json(s.f1_macro)},
              {"sensitivity_per_class", std::move(per_class)},
              {"confusion", confusion_to_json(s.pooled)}};
}

// --- enum names, shared with the CLI -------------------------------------

inline std::optional<LossMode> parse_loss_mode(std::string_view s) {
  for (LossMode m : kAblationModes) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

inline std::string_view to_string(ScoreTransform t) {
  return t == ScoreTransform::matrix_product ? "matrix_product" : "label_row";
}

inline std::string_view to_string(CenterWeighting w) {
  switch (w) {
    case CenterWeighting::none: return "none";
    case CenterWeighting::delta: return "delta";
    case CenterWeighting::update: return "update";
    case CenterWeighting::both: return "both";
  }
  return "both";
}

inline std::string_view to_string(ClassWeightMode m) {
  switch (m) {
    case ClassWeightMode::frequency: return "frequency";
    case ClassWeightMode::inverse_frequency: return "inverse";
    case ClassWeightMode::unit: return "unit";
  }
  return "unit";
}

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

// --- model files ------------------------------------------------------------

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, std::size_t cols_if_empty = 0) {
  if (!j.is_array()) throw InvalidInput("model: expected a matrix (array of rows)");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? cols_if_empty : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (!row.is_array() || row.size() != cols) throw InvalidInput("model: ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

inline Json model_to_json(const TrainState& s) {
  Json layers = Json::array();
  for (const auto& layer : s.network.layers()) {
    layers.push_back(Json{{"activation", to_string(layer.activation)},
                          {"weights", matrix_to_json(layer.weights)},
                          {"bias", layer.bias}});
  }
  return Json{{"format", "dcsl-model"},
              {"version", 1},
              {"loss_mode", to_string(s.config.loss_mode)},
              {"score_transform", to_string(s.config.score_transform)},
              {"costs_at_test", s.config.costs_at_test},
              {"config", Json{{"lambda_c", s.config.center_loss_weight},
                              {"alpha", s.config.center_alpha},
                              {"lr", s.config.learning_rate},
                              {"epochs", s.config.epochs},
                              {"batch", s.config.batch_size},
                              {"seed", s.config.seed},
                              {"class_weights", to_string(s.config.class_weight_mode)},
                              {"center_weighting", to_string(s.config.center_weighting)}}},
              {"class_weights", s.class_weights},
              {"score_costs", s.score_costs ? matrix_to_json(s.score_costs->entries()) : Json()},
              {"centers", matrix_to_json(s.centers.centers)},
              {"layers", std::move(layers)}};
}

/// Restores what prediction and embedding need; optimizer state and history
/// are not stored.
inline TrainState model_from_json(const Json& j) {
  if (j.value("format", "") != "dcsl-model") throw InvalidInput("model: not a dcsl-model file");
  TrainState s;
  const auto mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
  if (!mode) throw InvalidInput("model: unknown loss_mode");
  s.config.loss_mode = *mode;
  s.config.score_transform = j.at("score_transform").get<std::string>() == "label_row"
                                 ? ScoreTransform::label_row
                                 : ScoreTransform::matrix_product;
  s.config.costs_at_test = j.at("costs_at_test").get<bool>();
  s.class_weights = j.at("class_weights").get<std::vector<double>>();

  std::vector<DenseLayer> layers;
  for (const auto& l : j.at("layers")) {
    DenseLayer layer;
    layer.activation = l.at("activation").get<std::string>() == "relu" ? Activation::relu
                                                                        : Activation::identity;
    layer.weights = matrix_from_json(l.at("weights"));
    layer.bias = l.at("bias").get<std::vector<double>>();
    layers.push_back(std::move(layer));
  }
  s.network = Network(std::move(layers));
  s.centers.centers = matrix_from_json(j.at("centers"), s.network.feature_dim());
  if (!j.at("score_costs").is_null()) s.score_costs = ScoreCostMatrix(matrix_from_json(j.at("score_costs")));
  s.config.feature_dim = s.network.feature_dim();
  return s;
}

inline void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path + " for reading");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

}  // namespace dcsl
