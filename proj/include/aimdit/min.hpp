#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "aimdit/man.hpp"
#include "aimdit/numerics/random.hpp"
#include "aimdit/numerics/tensor.hpp"

namespace aimdit {

// Multi-head projections; all heads are packed column-wise, head h owning
// columns [h*d_k, (h+1)*d_k) of w_q, w_k and w_v.
struct AttentionParams {
  nn::Tensor w_q;  // d x d
  nn::Tensor w_k;  // d x d
  nn::Tensor w_v;  // d x d
  nn::Tensor w_o;  // d x d
  std::size_t heads = 1;
};

struct FeedForwardParams {
  nn::Tensor w1;  // d x d_ff
  nn::Tensor b1;  // d_ff
  nn::Tensor w2;  // d_ff x d
  nn::Tensor b2;  // d
};

struct LayerNormParams {
  nn::Tensor gain;
  nn::Tensor shift;
};

struct TransformerLayerParams {
  AttentionParams attn;
  FeedForwardParams ffn;
  LayerNormParams attn_norm;  // shared by the query stream and the source
  LayerNormParams ffn_norm;
};

using TransformerStack = std::vector<TransformerLayerParams>;

struct MinParams {
  std::array<TransformerStack, kNumModalities> cmt;  // query x_c, source x_p[m]
  std::array<TransformerStack, kNumModalities> smt;  // query and source x_p[m]
};

struct InteractionOutput {
  std::array<nn::Tensor, kNumModalities> y;  // T_delta x d each
};

// Per-head attention weights (T_q x T_k) captured when requested.
struct AttentionTrace {
  std::vector<nn::Tensor> weights;
};

// Queries from x_alpha, keys and values from x_beta. key_mask holds T_k
// entries (1 valid, 0 excluded).
nn::Tensor cross_modal_attention(const nn::Tensor& x_alpha, const nn::Tensor& x_beta, const AttentionParams& p,
                                 const nn::Tensor& key_mask, AttentionTrace* trace = nullptr);

// Pre-norm block:
//   x' = q + attn(norm(q), norm(kv));  out = x' + ffn(norm(x')).
nn::Tensor transformer_layer(const nn::Tensor& q_stream, const nn::Tensor& kv_source,
                             const TransformerLayerParams& p, const nn::Tensor& key_mask,
                             AttentionTrace* trace = nullptr);

// Threads the query stream through every layer; the source is fixed.
nn::Tensor cmt_stack(const nn::Tensor& initial_q, const nn::Tensor& source, const TransformerStack& layers,
                     const nn::Tensor& key_mask);

nn::Tensor mask_column(const nn::Tensor& step_mask, std::size_t m);

// y[m] = (CMT_m(x_c, x_p[m]) + SMT_m(x_p[m], x_p[m])) / 2.
InteractionOutput min_forward(const AugmentedFeatures& aug, const MinParams& p);

struct MinShape {
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t d_ff = 0;
  std::size_t depth = 1;
};

enum class InitScheme {
  // Residual-branch output projections start at zero.
  kIdentityResidual,
  // Every tensor random, including biases and norm parameters.
  kDense,
  // Everything zero except the layer-norm gains, which are one.
  kZero,
};

TransformerLayerParams make_transformer_layer(const MinShape& shape, nn::Rng& rng, InitScheme scheme);
MinParams make_min_params(const MinShape& shape, nn::Rng& rng, InitScheme scheme);

}  // namespace aimdit
