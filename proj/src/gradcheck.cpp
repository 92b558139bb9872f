#include "aimdit/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "aimdit/error.hpp"
#include "aimdit/numerics/ops.hpp"
#include "aimdit/numerics/random.hpp"

namespace aimdit {

using nn::Tensor;

ModelConfig GradcheckOptions::tiny_model() {
  ModelConfig c;
  c.d = 4;
  c.heads = 2;
  c.man_layers = 2;
  c.min_layers = 2;
  c.classes = 7;
  return c;
}

void GradcheckOptions::validate() const {
  model.validate();
  if (model.d > 8) fail(ErrorCode::kConfig, "gradcheck refuses d=" + std::to_string(model.d) + " (limit 8)");
  if (max_len == 0 || max_len > 4) fail(ErrorCode::kConfig, "gradcheck needs 1 <= max_len <= 4");
  if (batch == 0 || batch > 2) fail(ErrorCode::kConfig, "gradcheck needs 1 <= batch <= 2");
  if (!(eps > 0.0)) fail(ErrorCode::kConfig, "gradcheck eps must be positive");
  if (!(tolerance > 0.0)) fail(ErrorCode::kConfig, "gradcheck tolerance must be positive");
}

double gradcheck_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
}

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  opts.validate();
  const auto started = std::chrono::steady_clock::now();
  nn::PrecisionScope ps(nn::Precision::kFloat64);
  AimditModel model = make_model(opts.model, opts.seed, InitScheme::kDense);
  const std::size_t d = model.config.d;

  nn::Rng rng(opts.seed + 1);
  std::vector<ModalityFeatures> inputs(opts.batch);
  std::vector<int> labels;
  for (auto& f : inputs) {
    for (auto& s : f.streams) {
      const std::size_t t = 1 + rng.index(opts.max_len);
      s = Tensor::zeros({t, d});
      for (auto& v : s.mutable_data()) v = rng.normal();
    }
    labels.push_back(static_cast<int>(rng.index(model.config.classes)));
  }
  auto loss_value = [&] {
    nn::NoGradGuard no_grad;
    std::vector<Tensor> probs;
    for (const auto& f : inputs) probs.push_back(forward(model, f));
    return cross_entropy(probs, labels).item();
  };

  auto params = model.parameters();
  for (auto& p : params) p.tensor.zero_grad();
  {
    if (!opts.fault_op.empty()) nn::testing::set_backward_fault(opts.fault_op, opts.fault_scale);
    nn::Graph graph;
    std::vector<Tensor> probs;
    for (const auto& f : inputs) probs.push_back(forward(model, f));
    Tensor loss = cross_entropy(probs, labels);
    try {
      graph.backward(loss);
    } catch (...) {
      nn::testing::clear_backward_fault();
      throw;
    }
    nn::testing::clear_backward_fault();
  }

  GradcheckReport report;
  std::map<std::string, std::size_t> slot;
  for (auto& p : params) {
    auto [it, inserted] = slot.emplace(p.group, report.groups.size());
    if (inserted) report.groups.push_back({p.group, 0, 0.0, true});
    GroupCheck& g = report.groups[it->second];
    auto w = p.tensor.mutable_data();
    const auto analytic = p.tensor.has_grad() ? std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end())
                                              : std::vector<double>(w.size(), 0.0);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double orig = w[k];
      w[k] = orig + opts.eps;
      const double up = loss_value();
      w[k] = orig - opts.eps;
      const double down = loss_value();
      w[k] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      g.max_rel_error = std::max(g.max_rel_error, gradcheck_relative_error(analytic[k], numeric));
      ++g.entries;
    }
  }
  for (auto& g : report.groups) {
    g.passed = g.max_rel_error < opts.tolerance;
    report.passed = report.passed && g.passed;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace aimdit
