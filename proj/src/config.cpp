#include "aimdit/config.hpp"

#include <cmath>
#include <set>

#include "aimdit/error.hpp"

namespace aimdit {

std::string precision_name(nn::Precision p) { return p == nn::Precision::kFloat32 ? "float32" : "float64"; }

nn::Precision parse_precision(const std::string& name) {
  if (name == "float32" || name == "f32" || name == "single") return nn::Precision::kFloat32;
  if (name == "float64" || name == "f64" || name == "double") return nn::Precision::kFloat64;
  fail(ErrorCode::kConfig, "unknown precision '" + name + "' (use float32 or float64)");
}

void RunConfig::validate() const {
  model.validate();
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::kConfig, std::string(what) + " must be positive and finite");
  };
  if (!(optim.lr >= 0.0) || !std::isfinite(optim.lr)) fail(ErrorCode::kConfig, "lr must be finite and >= 0");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) fail(ErrorCode::kConfig, "beta1 must lie in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) fail(ErrorCode::kConfig, "beta2 must lie in [0, 1)");
  positive(optim.epsilon, "epsilon");
  if (batch_size == 0) fail(ErrorCode::kConfig, "batch_size must be positive");
  if (epochs == 0) fail(ErrorCode::kConfig, "epochs must be positive");
}

nlohmann::json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"optimizer", {{"lr", optim.lr}, {"beta1", optim.beta1}, {"beta2", optim.beta2}, {"epsilon", optim.epsilon}}},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"precision", precision_name(precision)},
          {"dataset", dataset},
          {"checkpoint", checkpoint},
          {"report", report}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "run config must be a JSON object");
  static const std::set<std::string> known{"model", "optimizer", "batch_size", "epochs", "seed",
                                           "precision", "dataset", "checkpoint", "report"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(ErrorCode::kConfig, "unknown run config key '" + key + "'");
  RunConfig c;
  try {
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optim.lr = o.value("lr", c.optim.lr);
      c.optim.beta1 = o.value("beta1", c.optim.beta1);
      c.optim.beta2 = o.value("beta2", c.optim.beta2);
      c.optim.epsilon = o.value("epsilon", c.optim.epsilon);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
    c.dataset = j.value("dataset", c.dataset);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    c.report = j.value("report", c.report);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("run config: ") + e.what());
  }
  return c;
}

}  // namespace aimdit
