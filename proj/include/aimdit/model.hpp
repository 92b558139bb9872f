#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimdit/man.hpp"
#include "aimdit/min.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace aimdit {

struct ModelConfig {
  std::size_t d = 8;
  std::size_t d_h = 0;   // 0 -> 2d
  std::size_t heads = 4;
  std::size_t d_ff = 0;  // 0 -> 4d
  std::size_t man_layers = 2;
  std::size_t min_layers = 4;
  std::vector<std::size_t> kernel_scales{1, 3, 5};
  std::size_t classes = 7;
  // Ablations.
  bool use_man = true;
  bool use_min = true;
  // Subset of "tav". Disabled slots receive a copy of the first enabled
  // modality, so no information from them reaches the model.
  std::string modalities = "tav";

  // Copy with derived widths filled in.
  ModelConfig resolved() const;
  // Throws kConfig on the first inconsistency.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ClassifierParams {
  nn::Tensor w1;  // 3d x d_h
  nn::Tensor b1;  // d_h
  nn::Tensor w2;  // d_h x C
  nn::Tensor b2;  // C
};

struct NamedParameter {
  std::string name;   // unique, e.g. "min.cmt.text.l0.attn.w_q"
  std::string group;  // e.g. "min.cmt.text.attn"
  nn::Tensor tensor;
};

struct AimditModel {
  ModelConfig config;
  ManParams man_joint;
  std::array<ManParams, kNumModalities> man_modal;
  MinParams min;
  ClassifierParams clf;

  // Parameters in a fixed order; MAN/MIN entries are absent when ablated.
  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
};

// kIdentityResidual: MAN kernels and MIN projections random, residual-branch
// outputs zero, classifier random. kDense: every parameter random.
// kZero: MAN, MIN residual branches and the classifier all zero.
AimditModel make_model(const ModelConfig& config, std::uint64_t seed,
                       InitScheme scheme = InitScheme::kIdentityResidual);

// Mean over valid steps of each y[m], concatenated, then
// softmax(W2 (GELU(W1 x) + b1) + b2). Returns a 1 x C row.
nn::Tensor classify(const InteractionOutput& y, const nn::Tensor& step_mask, const ClassifierParams& clf);

ModalityFeatures select_modalities(const ModalityFeatures& f, const std::string& modalities);

// Full MAN -> MIN -> classifier pipeline; 1 x C probabilities.
nn::Tensor forward(const AimditModel& model, const ModalityFeatures& f);

// Mean cross-entropy over a batch of 1 x C probability rows.
nn::Tensor cross_entropy(const std::vector<nn::Tensor>& probs, const std::vector<int>& labels);

// Lowest index among the maxima.
int argmax(std::span<const double> values);

}  // namespace aimdit
