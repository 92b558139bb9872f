#include "aimdit/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aimdit/error.hpp"
#include "aimdit/numerics/ops.hpp"
#include "aimdit/numerics/random.hpp"

namespace aimdit {

using nn::Tensor;

namespace {

constexpr std::array<const char*, kNumModalities> kModalityNames{"text", "audio", "visual"};
constexpr std::string_view kModalityLetters = "tav";

void push(std::vector<NamedParameter>& out, std::string name, std::string group, const Tensor& t) {
  out.push_back({std::move(name), std::move(group), t});
}

void push_man(std::vector<NamedParameter>& out, const std::string& prefix, const ManParams& p) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& branches = p.layers[l].branches;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      const std::string stem = prefix + ".l" + std::to_string(l) + ".b" + std::to_string(b);
      push(out, stem + ".kernel", prefix + ".kernel", branches[b].kernel);
      push(out, stem + ".bias", prefix + ".bias", branches[b].bias);
    }
  }
}

void push_stack(std::vector<NamedParameter>& out, const std::string& prefix, const TransformerStack& stack) {
  for (std::size_t l = 0; l < stack.size(); ++l) {
    const auto& p = stack[l];
    const std::string stem = prefix + ".l" + std::to_string(l);
    push(out, stem + ".attn.w_q", prefix + ".attn", p.attn.w_q);
    push(out, stem + ".attn.w_k", prefix + ".attn", p.attn.w_k);
    push(out, stem + ".attn.w_v", prefix + ".attn", p.attn.w_v);
    push(out, stem + ".attn.w_o", prefix + ".attn", p.attn.w_o);
    push(out, stem + ".ffn.w1", prefix + ".ffn", p.ffn.w1);
    push(out, stem + ".ffn.b1", prefix + ".ffn", p.ffn.b1);
    push(out, stem + ".ffn.w2", prefix + ".ffn", p.ffn.w2);
    push(out, stem + ".ffn.b2", prefix + ".ffn", p.ffn.b2);
    push(out, stem + ".attn_norm.gain", prefix + ".norm", p.attn_norm.gain);
    push(out, stem + ".attn_norm.shift", prefix + ".norm", p.attn_norm.shift);
    push(out, stem + ".ffn_norm.gain", prefix + ".norm", p.ffn_norm.gain);
    push(out, stem + ".ffn_norm.shift", prefix + ".norm", p.ffn_norm.shift);
  }
}

Tensor random_matrix(std::size_t rows, std::size_t cols, nn::Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Tensor vector_param(std::size_t n, nn::Rng* rng) {
  Tensor t = Tensor::zeros({n});
  if (rng)
    for (auto& v : t.mutable_data()) v = rng->uniform(-0.1, 0.1);
  t.set_requires_grad(true);
  return t;
}

// 1 x T row averaging the valid steps of column m.
Tensor pooling_row(const Tensor& step_mask, std::size_t m) {
  const std::size_t t = step_mask.dim(0);
  double count = 0.0;
  for (std::size_t r = 0; r < t; ++r) count += step_mask.at(r, m) != 0.0 ? 1.0 : 0.0;
  if (count == 0.0) fail(ErrorCode::kDimension, std::string("modality ") + kModalityNames[m] + " has no valid steps");
  Tensor w = Tensor::zeros({1, t});
  auto v = w.mutable_data();
  for (std::size_t r = 0; r < t; ++r) v[r] = step_mask.at(r, m) != 0.0 ? 1.0 / count : 0.0;
  return w;
}

}  // namespace

ModelConfig ModelConfig::resolved() const {
  ModelConfig c = *this;
  if (c.d_h == 0) c.d_h = 2 * c.d;
  if (c.d_ff == 0) c.d_ff = 4 * c.d;
  return c;
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfig, what); };
  if (d == 0) bad("d must be positive");
  if (heads == 0) bad("heads must be positive");
  if (d % heads != 0) bad("d=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(heads));
  if (man_layers == 0) bad("man_layers must be at least 1");
  if (min_layers == 0) bad("min_layers must be at least 1");
  if (classes < 2) bad("classes must be at least 2");
  if (kernel_scales.empty()) bad("kernel_scales must not be empty");
  for (auto s : kernel_scales)
    if (s % 2 == 0) bad("kernel scale " + std::to_string(s) + " must be odd");
  if (modalities.empty()) bad("modalities must name at least one of t, a, v");
  for (char c : modalities)
    if (kModalityLetters.find(c) == std::string_view::npos) {
      bad("modalities may only contain t, a, v; got '" + modalities + "'");
    }
  for (std::size_t i = 0; i < modalities.size(); ++i)
    if (modalities.find(modalities[i], i + 1) != std::string::npos) bad("modalities repeats '" + modalities + "'");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"d_h", d_h},
          {"heads", heads},
          {"d_ff", d_ff},
          {"man_layers", man_layers},
          {"min_layers", min_layers},
          {"kernel_scales", kernel_scales},
          {"classes", classes},
          {"use_man", use_man},
          {"use_min", use_min},
          {"modalities", modalities}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d = j.value("d", c.d);
    c.d_h = j.value("d_h", c.d_h);
    c.heads = j.value("heads", c.heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.man_layers = j.value("man_layers", c.man_layers);
    c.min_layers = j.value("min_layers", c.min_layers);
    c.kernel_scales = j.value("kernel_scales", c.kernel_scales);
    c.classes = j.value("classes", c.classes);
    c.use_man = j.value("use_man", c.use_man);
    c.use_min = j.value("use_min", c.use_min);
    c.modalities = j.value("modalities", c.modalities);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("model config: ") + e.what());
  }
  return c;
}

std::vector<NamedParameter> AimditModel::parameters() const {
  std::vector<NamedParameter> out;
  if (config.use_man) {
    push_man(out, "man.joint", man_joint);
    for (std::size_t m = 0; m < kNumModalities; ++m)
      push_man(out, std::string("man.") + kModalityNames[m], man_modal[m]);
  }
  if (config.use_min) {
    for (std::size_t m = 0; m < kNumModalities; ++m)
      push_stack(out, std::string("min.cmt.") + kModalityNames[m], min.cmt[m]);
    for (std::size_t m = 0; m < kNumModalities; ++m)
      push_stack(out, std::string("min.smt.") + kModalityNames[m], min.smt[m]);
  }
  push(out, "clf.w1", "clf.w1", clf.w1);
  push(out, "clf.b1", "clf.b1", clf.b1);
  push(out, "clf.w2", "clf.w2", clf.w2);
  push(out, "clf.b2", "clf.b2", clf.b2);
  return out;
}

std::size_t AimditModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

AimditModel make_model(const ModelConfig& config, std::uint64_t seed, InitScheme scheme) {
  AimditModel model;
  model.config = config.resolved();
  model.config.validate();
  const ModelConfig& c = model.config;
  nn::Rng rng(seed);
  const bool zero = scheme == InitScheme::kZero;
  const bool dense = scheme == InitScheme::kDense;

  if (c.use_man) {
    nn::Rng* man_rng = zero ? nullptr : &rng;
    model.man_joint = make_man_params(c.man_layers, c.kernel_scales, man_rng, dense);
    for (auto& p : model.man_modal) p = make_man_params(c.man_layers, c.kernel_scales, man_rng, dense);
  }
  if (c.use_min) {
    model.min = make_min_params({c.d, c.heads, c.d_ff, c.min_layers}, rng, scheme);
  }
  if (zero) {
    model.clf.w1 = Tensor::zeros({kNumModalities * c.d, c.d_h}).set_requires_grad(true);
    model.clf.w2 = Tensor::zeros({c.d_h, c.classes}).set_requires_grad(true);
  } else {
    model.clf.w1 = random_matrix(kNumModalities * c.d, c.d_h, rng);
    model.clf.w2 = random_matrix(c.d_h, c.classes, rng);
  }
  model.clf.b1 = vector_param(c.d_h, dense ? &rng : nullptr);
  model.clf.b2 = vector_param(c.classes, dense ? &rng : nullptr);
  return model;
}

Tensor classify(const InteractionOutput& y, const Tensor& step_mask, const ClassifierParams& clf) {
  const std::size_t d = y.y[kText].dim(1);
  if (!clf.w1.defined() || clf.w1.rank() != 2 || clf.w1.dim(0) != kNumModalities * d) {
    fail(ErrorCode::kDimension, "classifier W1 " + (clf.w1.defined() ? nn::shape_str(clf.w1.shape()) : "undefined") +
                                    " does not accept 3x" + std::to_string(d) + " pooled features");
  }
  std::vector<Tensor> pooled;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (y.y[m].dim(1) != d) fail(ErrorCode::kDimension, "interaction outputs differ in width");
    pooled.push_back(nn::matmul(pooling_row(step_mask, m), y.y[m]));
  }
  Tensor joint = nn::concat(pooled, 1);
  Tensor hidden = nn::add_rowwise(nn::gelu(nn::matmul(joint, clf.w1)), clf.b1);
  return nn::softmax_lastdim(nn::linear(hidden, clf.w2, clf.b2));
}

ModalityFeatures select_modalities(const ModalityFeatures& f, const std::string& modalities) {
  if (modalities == "tav") return f;
  if (modalities.empty()) fail(ErrorCode::kConfig, "no modality enabled");
  std::array<bool, kNumModalities> on{};
  for (char c : modalities) {
    const auto pos = kModalityLetters.find(c);
    if (pos == std::string_view::npos) fail(ErrorCode::kConfig, "unknown modality '" + std::string(1, c) + "'");
    on[pos] = true;
  }
  const std::size_t first = kModalityLetters.find(modalities.front());
  ModalityFeatures out = f;
  for (std::size_t m = 0; m < kNumModalities; ++m)
    if (!on[m]) out.streams[m] = f.streams[first];
  return out;
}

Tensor forward(const AimditModel& model, const ModalityFeatures& f) {
  const ModelConfig& c = model.config;
  const std::size_t d = f.width();
  if (d != c.d) {
    fail(ErrorCode::kDimension, "features have width " + std::to_string(d) + " but the model expects d=" +
                                    std::to_string(c.d));
  }
  const ModalityFeatures input = select_modalities(f, c.modalities);
  AugmentedFeatures aug = c.use_man ? man_forward(input, model.man_joint, model.man_modal) : man_bypass(input);
  InteractionOutput inter;
  if (c.use_min) {
    inter = min_forward(aug, model.min);
  } else {
    inter.y = aug.x_p;
  }
  return classify(inter, aug.mask, model.clf);
}

Tensor cross_entropy(const std::vector<Tensor>& probs, const std::vector<int>& labels) {
  if (probs.empty()) fail(ErrorCode::kDimension, "cross_entropy over an empty batch");
  return nn::cross_entropy_from_probs(probs.size() == 1 ? probs.front() : nn::concat(probs, 0), labels);
}

int argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kDimension, "argmax of an empty vector");
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace aimdit
