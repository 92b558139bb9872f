#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "aimdit/numerics/random.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace aimdit {

enum Modality : std::size_t { kText = 0, kAudio = 1, kVisual = 2 };
inline constexpr std::size_t kNumModalities = 3;

// One utterance: three T_m x d sequences sharing the feature width d.
struct ModalityFeatures {
  std::array<nn::Tensor, kNumModalities> streams;

  const nn::Tensor& text() const { return streams[kText]; }
  const nn::Tensor& audio() const { return streams[kAudio]; }
  const nn::Tensor& visual() const { return streams[kVisual]; }
  std::size_t length(Modality m) const { return streams[m].dim(0); }
  // Validates ranks and widths; returns d.
  std::size_t width() const;
};

// The three modalities zero-padded to a common length and laid side by side
// as one T_delta x 3d single-channel image (columns: text, audio, visual).
struct PaddedTriple {
  nn::Tensor joint;
  std::size_t t_delta = 0;
  // T_delta x 3, 1 where the step is inside that modality's true length.
  nn::Tensor mask;
};

struct InceptionBranch {
  nn::Tensor kernel;  // s x s, s odd
  nn::Tensor bias;    // one element
};

struct InceptionParams {
  std::vector<InceptionBranch> branches;
};

// One InceptionParams per residual MABlock.
struct ManParams {
  std::vector<InceptionParams> layers;
};

struct AugmentedFeatures {
  nn::Tensor x_c;                                  // inter-modal, T_delta x d
  std::array<nn::Tensor, kNumModalities> x_p;      // intra-modal, T_delta x d
  nn::Tensor mask;                                 // T_delta x 3
};

PaddedTriple pad_and_reshape(const ModalityFeatures& f);

// Mean over branches of conv2d_same(x2d, kernel) + bias.
nn::Tensor inception(const nn::Tensor& x2d, const InceptionParams& p);

// Splits T x 3d into three T x d blocks, zeroing rows outside each
// modality's mask.
std::array<nn::Tensor, kNumModalities> debulk(const nn::Tensor& x2d, const nn::Tensor& mask);

// Expands a T x 3 step mask to the T x 3d layout of the joint image.
nn::Tensor block_mask(const nn::Tensor& mask, std::size_t d);

// joint + mask(inception(joint)); the mask is carried through.
PaddedTriple mablock(const PaddedTriple& x, const InceptionParams& p);

// Folds mablock over every layer of p.
PaddedTriple man_stack(PaddedTriple x, const ManParams& p);

// Joint MAN -> debulk -> mean fusion gives x_c. Each modality's debulked
// output, replicated into all three slots, runs through its own MAN and the
// three results are mean-fused into x_p[m].
AugmentedFeatures man_forward(const ModalityFeatures& f, const ManParams& joint,
                              const std::array<ManParams, kNumModalities>& per_modality);

// MAN bypass: x_c is the mean of the padded inputs and x_p[m] the padded
// inputs themselves.
AugmentedFeatures man_bypass(const ModalityFeatures& f);

// Kernels ~ U(-1/sqrt(s*s), 1/sqrt(s*s)), biases zero. With rng == nullptr all
// parameters are zero.
ManParams make_man_params(std::size_t layers, const std::vector<std::size_t>& kernel_scales,
                          nn::Rng* rng, bool random_biases = false);

}  // namespace aimdit
