#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "aimdit/model.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace aimdit {

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optim;
  std::size_t batch_size = 96;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  nn::Precision precision = nn::Precision::kFloat32;
  std::string dataset;
  std::string checkpoint = "aimdit.ckpt";
  std::string report = "train_report.json";

  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

std::string precision_name(nn::Precision p);
nn::Precision parse_precision(const std::string& name);

}  // namespace aimdit
