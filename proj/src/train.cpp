#include "aimdit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "aimdit/checkpoint.hpp"
#include "aimdit/error.hpp"
#include "aimdit/numerics/ops.hpp"

namespace aimdit {

using nn::Tensor;

Adam::Adam(std::vector<NamedParameter> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double update = cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.epsilon);
      w[k] = nn::round_to_precision(w[k] - update);
    }
  }
}

EvalResult evaluate(const AimditModel& model, const FeatureDataset& ds, const std::string& split,
                    nn::Precision precision) {
  nn::PrecisionScope ps(precision);
  nn::NoGradGuard no_grad;
  const auto& idx = ds.split(split);
  if (idx.empty()) fail(ErrorCode::kConfig, "split '" + split + "' is empty");
  EvalResult r;
  double loss = 0.0;
  for (std::size_t i : idx) {
    const auto& u = ds.utterances[i];
    Tensor probs = forward(model, u.features);
    const auto p = probs.data();
    loss -= std::log(std::max(p[static_cast<std::size_t>(u.label)], 1e-12));
    r.predictions.push_back(argmax(p));
    r.labels.push_back(u.label);
  }
  r.loss = loss / static_cast<double>(idx.size());
  r.metrics = compute_metrics(r.predictions, r.labels, model.config.classes);
  return r;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) {
    ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val", e.val.to_json()}});
  }
  return {{"config", config},
          {"seed", seed},
          {"epochs", ep},
          {"best_epoch", best_epoch},
          {"final_split", final_split},
          {"final_loss", final_loss},
          {"final_metrics", final_metrics.to_json()},
          {"wall_time_seconds", wall_time_seconds}};
}

void check_compatible(const ModelConfig& model, const FeatureDataset& ds) {
  if (model.d != ds.d) {
    fail(ErrorCode::kDimension, "model width d=" + std::to_string(model.d) + " does not match dataset d=" +
                                    std::to_string(ds.d));
  }
  if (model.classes != ds.classes()) {
    fail(ErrorCode::kDimension, "model has " + std::to_string(model.classes) + " classes, dataset has " +
                                    std::to_string(ds.classes()));
  }
}

double train_step(AimditModel& model, Adam& adam, const std::vector<const ModalityFeatures*>& features,
                  const std::vector<int>& labels) {
  adam.zero_grad();
  double value = 0.0;
  {
    nn::Graph graph;
    std::vector<Tensor> probs;
    probs.reserve(features.size());
    for (const auto* f : features) probs.push_back(forward(model, *f));
    Tensor loss = cross_entropy(probs, labels);
    value = loss.item();
    if (!std::isfinite(value)) {
      fail(ErrorCode::kNumeric, "non-finite training loss at optimizer step " + std::to_string(adam.steps() + 1));
    }
    graph.backward(loss);
  }
  adam.step();
  return value;
}

TrainReport train(AimditModel& model, const FeatureDataset& ds, const RunConfig& cfg, std::ostream* log) {
  cfg.validate();
  check_compatible(model.config, ds);
  const auto& train_idx = ds.split("train");
  ds.split("val");
  if (train_idx.empty()) fail(ErrorCode::kConfig, "train split is empty");

  const auto started = std::chrono::steady_clock::now();
  nn::PrecisionScope ps(cfg.precision);
  if (cfg.precision == nn::Precision::kFloat32) quantize_parameters(model);

  TrainReport report;
  report.config = cfg.to_json();
  report.seed = cfg.seed;
  Adam adam(model.parameters(), cfg.optim);

  std::vector<std::vector<double>> best;
  double best_wf1 = -1.0;
  std::vector<double> utterance_loss(ds.utterances.size(), 0.0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(ds, "train", cfg.batch_size, cfg.seed * 1000003ULL + epoch, true);
    for (const auto& batch : batches) {
      adam.zero_grad();
      {
        nn::Graph graph;
        std::vector<Tensor> probs;
        probs.reserve(batch.features.size());
        for (const auto* f : batch.features) probs.push_back(forward(model, *f));
        Tensor loss = cross_entropy(probs, batch.labels);
        if (!std::isfinite(loss.item())) {
          fail(ErrorCode::kNumeric, "non-finite training loss at epoch " + std::to_string(epoch) + ", optimizer step " +
                                        std::to_string(adam.steps() + 1));
        }
        for (std::size_t k = 0; k < probs.size(); ++k) {
          const double p = probs[k].data()[static_cast<std::size_t>(batch.labels[k])];
          utterance_loss[batch.indices[k]] = -std::log(std::max(p, 1e-12));
        }
        graph.backward(loss);
      }
      adam.step();
    }
    // Summed in split order so the value does not depend on the shuffle.
    double train_loss = 0.0;
    for (std::size_t i : train_idx) train_loss += utterance_loss[i];
    train_loss /= static_cast<double>(train_idx.size());

    EvalResult val = evaluate(model, ds, "val", cfg.precision);
    report.epochs.push_back({epoch, train_loss, val.loss, val.metrics});
    if (val.metrics.weighted_f1 > best_wf1) {
      best_wf1 = val.metrics.weighted_f1;
      report.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.parameters()) best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
    if (log) {
      *log << "epoch " << std::setw(3) << epoch << "/" << cfg.epochs << std::fixed << std::setprecision(4)
           << "  train_loss " << train_loss << "  val_loss " << val.loss << "  val_acc " << val.metrics.accuracy
           << "  val_wf1 " << val.metrics.weighted_f1 << "\n"
           << std::defaultfloat;
    }
  }

  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(best[i].begin(), best[i].end(), params[i].tensor.mutable_data().begin());
  quantize_parameters(model);

  report.final_split = ds.splits.count("test") && !ds.splits.at("test").empty() ? "test" : "val";
  EvalResult final = evaluate(model, ds, report.final_split, cfg.precision);
  report.final_metrics = final.metrics;
  report.final_loss = final.loss;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace aimdit
