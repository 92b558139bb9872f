#include "aimdit/man.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aimdit/error.hpp"
#include "aimdit/numerics/ops.hpp"

namespace aimdit {

using nn::Tensor;

namespace {

// T x d tensor of the column `m` of a T x 3 step mask; empty when the column
// is all ones.
Tensor modality_block_mask(const Tensor& mask, std::size_t m, std::size_t d) {
  const std::size_t t = mask.dim(0);
  bool all_valid = true;
  for (std::size_t r = 0; r < t; ++r) all_valid = all_valid && mask.at(r, m) != 0.0;
  if (all_valid) return {};
  Tensor out = Tensor::zeros({t, d});
  auto v = out.mutable_data();
  for (std::size_t r = 0; r < t; ++r)
    if (mask.at(r, m) != 0.0) std::fill_n(&v[r * d], d, 1.0);
  return out;
}

void check_mask(const Tensor& x2d, const Tensor& mask) {
  if (mask.rank() != 2 || mask.dim(1) != kNumModalities || mask.dim(0) != x2d.dim(0)) {
    fail(ErrorCode::kDimension, "step mask " + nn::shape_str(mask.shape()) +
                                    " does not fit joint tensor " + nn::shape_str(x2d.shape()));
  }
}

}  // namespace

std::size_t ModalityFeatures::width() const {
  for (const auto& s : streams) {
    if (!s.defined() || s.rank() != 2) {
      fail(ErrorCode::kDimension, "modality streams must be defined T x d matrices");
    }
  }
  const std::size_t d = streams[kText].dim(1);
  if (streams[kAudio].dim(1) != d || streams[kVisual].dim(1) != d) {
    fail(ErrorCode::kDimension, "modality widths differ: text " + nn::shape_str(streams[kText].shape()) +
                                    ", audio " + nn::shape_str(streams[kAudio].shape()) + ", visual " +
                                    nn::shape_str(streams[kVisual].shape()));
  }
  return d;
}

PaddedTriple pad_and_reshape(const ModalityFeatures& f) {
  f.width();
  std::size_t t_delta = 0;
  for (const auto& s : f.streams) t_delta = std::max(t_delta, s.dim(0));
  PaddedTriple out;
  out.t_delta = t_delta;
  out.joint = nn::concat({nn::pad_rows(f.streams[kText], t_delta), nn::pad_rows(f.streams[kAudio], t_delta),
                          nn::pad_rows(f.streams[kVisual], t_delta)},
                         1);
  out.mask = Tensor::zeros({t_delta, kNumModalities});
  auto mv = out.mask.mutable_data();
  for (std::size_t m = 0; m < kNumModalities; ++m)
    for (std::size_t r = 0; r < f.streams[m].dim(0); ++r) mv[r * kNumModalities + m] = 1.0;
  return out;
}

Tensor inception(const Tensor& x2d, const InceptionParams& p) {
  if (p.branches.empty()) fail(ErrorCode::kConfig, "inception block needs at least one branch");
  std::vector<Tensor> outs;
  outs.reserve(p.branches.size());
  for (const auto& b : p.branches) outs.push_back(nn::conv2d_same(x2d, b.kernel, b.bias));
  if (outs.size() == 1) return outs.front();
  return nn::mean_stack(outs);
}

Tensor block_mask(const Tensor& mask, std::size_t d) {
  const std::size_t t = mask.dim(0);
  Tensor out = Tensor::zeros({t, kNumModalities * d});
  auto v = out.mutable_data();
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t m = 0; m < kNumModalities; ++m)
      if (mask.at(r, m) != 0.0) std::fill_n(&v[r * kNumModalities * d + m * d], d, 1.0);
  return out;
}

std::array<Tensor, kNumModalities> debulk(const Tensor& x2d, const Tensor& mask) {
  if (x2d.rank() != 2 || x2d.dim(1) % kNumModalities != 0) {
    fail(ErrorCode::kDimension, "debulk: width of " + nn::shape_str(x2d.shape()) + " is not divisible by 3");
  }
  check_mask(x2d, mask);
  const std::size_t d = x2d.dim(1) / kNumModalities;
  std::array<Tensor, kNumModalities> out;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    Tensor part = nn::slice(x2d, 1, m * d, (m + 1) * d);
    Tensor keep = modality_block_mask(mask, m, d);
    out[m] = keep.defined() ? nn::mul(part, keep) : part;
  }
  return out;
}

PaddedTriple mablock(const PaddedTriple& x, const InceptionParams& p) {
  check_mask(x.joint, x.mask);
  Tensor conv = inception(x.joint, p);
  if (x.joint.dim(1) % kNumModalities != 0) {
    fail(ErrorCode::kDimension, "mablock: joint width is not divisible by 3");
  }
  bool all_valid = true;
  for (double v : x.mask.data()) all_valid = all_valid && v != 0.0;
  if (!all_valid) conv = nn::mul(conv, block_mask(x.mask, x.joint.dim(1) / kNumModalities));
  PaddedTriple out;
  out.joint = nn::add(conv, x.joint);
  out.t_delta = x.t_delta;
  out.mask = x.mask;
  return out;
}

PaddedTriple man_stack(PaddedTriple x, const ManParams& p) {
  if (p.layers.empty()) fail(ErrorCode::kConfig, "a MAN needs at least one MABlock");
  for (const auto& layer : p.layers) x = mablock(x, layer);
  return x;
}

AugmentedFeatures man_forward(const ModalityFeatures& f, const ManParams& joint,
                              const std::array<ManParams, kNumModalities>& per_modality) {
  f.width();
  PaddedTriple padded = pad_and_reshape(f);
  PaddedTriple mixed = man_stack(padded, joint);
  auto debulked = debulk(mixed.joint, mixed.mask);

  AugmentedFeatures out;
  out.mask = padded.mask;
  out.x_c = nn::mean_stack({debulked[kText], debulked[kAudio], debulked[kVisual]});

  const std::size_t t = padded.t_delta;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    PaddedTriple replicated;
    replicated.t_delta = t;
    replicated.joint = nn::concat({debulked[m], debulked[m], debulked[m]}, 1);
    replicated.mask = Tensor::zeros({t, kNumModalities});
    auto mv = replicated.mask.mutable_data();
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t k = 0; k < kNumModalities; ++k) mv[r * kNumModalities + k] = padded.mask.at(r, m);
    PaddedTriple refined = man_stack(std::move(replicated), per_modality[m]);
    auto parts = debulk(refined.joint, refined.mask);
    out.x_p[m] = nn::mean_stack({parts[0], parts[1], parts[2]});
  }
  return out;
}

AugmentedFeatures man_bypass(const ModalityFeatures& f) {
  PaddedTriple padded = pad_and_reshape(f);
  auto parts = debulk(padded.joint, padded.mask);
  AugmentedFeatures out;
  out.mask = padded.mask;
  out.x_c = nn::mean_stack({parts[kText], parts[kAudio], parts[kVisual]});
  out.x_p = parts;
  return out;
}

ManParams make_man_params(std::size_t layers, const std::vector<std::size_t>& kernel_scales, nn::Rng* rng,
                          bool random_biases) {
  if (layers == 0) fail(ErrorCode::kConfig, "a MAN needs at least one layer");
  if (kernel_scales.empty()) fail(ErrorCode::kConfig, "inception needs at least one kernel scale");
  ManParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    InceptionParams block;
    for (std::size_t s : kernel_scales) {
      if (s % 2 == 0) fail(ErrorCode::kConfig, "kernel scale " + std::to_string(s) + " is not odd");
      InceptionBranch b;
      b.kernel = Tensor::zeros({s, s});
      b.bias = Tensor::scalar(0.0);
      if (rng) {
        const double bound = 1.0 / static_cast<double>(s);
        for (auto& v : b.kernel.mutable_data()) v = rng->uniform(-bound, bound);
        if (random_biases) b.bias.mutable_data()[0] = rng->uniform(-0.1, 0.1);
      }
      b.kernel.set_requires_grad(true);
      b.bias.set_requires_grad(true);
      block.branches.push_back(std::move(b));
    }
    p.layers.push_back(std::move(block));
  }
  return p;
}

}  // namespace aimdit
