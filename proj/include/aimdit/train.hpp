#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimdit/config.hpp"
#include "aimdit/data.hpp"
#include "aimdit/metrics.hpp"
#include "aimdit/model.hpp"

namespace aimdit {

// Adaptive-moment optimizer with bias correction and no weight decay.
class Adam {
 public:
  Adam(std::vector<NamedParameter> params, OptimizerConfig cfg);

  void zero_grad();
  // Applies one update from the accumulated gradients. Under float32
  // precision the updated parameters are rounded to float.
  void step();
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<NamedParameter> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

struct EvalResult {
  double loss = 0.0;
  MetricsReport metrics;
  std::vector<int> predictions;
  std::vector<int> labels;
};

EvalResult evaluate(const AimditModel& model, const FeatureDataset& ds, const std::string& split,
                    nn::Precision precision = nn::Precision::kFloat32);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsReport val;
};

struct TrainReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string final_split;
  MetricsReport final_metrics;
  double final_loss = 0.0;
  double wall_time_seconds = 0.0;

  nlohmann::json to_json() const;
};

// Checks that the dataset fits the model and has train/val splits.
void check_compatible(const ModelConfig& model, const FeatureDataset& ds);

// Minimizes mean cross-entropy over the "train" split with Adam, keeping the
// parameters of the epoch with the best validation weighted F1. On return the
// model holds those parameters rounded to float32, and final_metrics are
// computed on "test" (or "val" when there is no test split).
TrainReport train(AimditModel& model, const FeatureDataset& ds, const RunConfig& cfg, std::ostream* log = nullptr);

// One full-batch optimizer step on the given utterances; returns the loss
// before the update.
double train_step(AimditModel& model, Adam& adam, const std::vector<const ModalityFeatures*>& features,
                  const std::vector<int>& labels);

}  // namespace aimdit
