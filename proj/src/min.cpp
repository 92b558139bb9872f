#include "aimdit/min.hpp"

#include <cmath>
#include <string>

#include "aimdit/error.hpp"
#include "aimdit/numerics/ops.hpp"

namespace aimdit {

using nn::Tensor;

namespace {

void check_matrix(const char* what, const Tensor& t, std::size_t rows, std::size_t cols) {
  if (!t.defined() || t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    fail(ErrorCode::kDimension, std::string(what) + " must be " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " +
                                    (t.defined() ? nn::shape_str(t.shape()) : std::string("undefined")));
  }
}

Tensor uniform_matrix(std::size_t rows, std::size_t cols, nn::Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor uniform_vector(std::size_t n, double center, double half_width, nn::Rng& rng) {
  Tensor t = Tensor::zeros({n});
  for (auto& v : t.mutable_data()) v = center + rng.uniform(-half_width, half_width);
  return t;
}

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace

Tensor cross_modal_attention(const Tensor& x_alpha, const Tensor& x_beta, const AttentionParams& p,
                             const Tensor& key_mask, AttentionTrace* trace) {
  if (x_alpha.rank() != 2 || x_beta.rank() != 2) {
    fail(ErrorCode::kDimension, "attention inputs must be matrices, got " + nn::shape_str(x_alpha.shape()) +
                                    " and " + nn::shape_str(x_beta.shape()));
  }
  const std::size_t d = x_alpha.dim(1);
  if (x_beta.dim(1) != d) {
    fail(ErrorCode::kDimension, "attention width mismatch: queries " + nn::shape_str(x_alpha.shape()) +
                                    ", keys " + nn::shape_str(x_beta.shape()));
  }
  if (p.heads == 0 || d % p.heads != 0) {
    fail(ErrorCode::kConfig, "width " + std::to_string(d) + " is not divisible by " + std::to_string(p.heads) +
                                 " heads");
  }
  check_matrix("w_q", p.w_q, d, d);
  check_matrix("w_k", p.w_k, d, d);
  check_matrix("w_v", p.w_v, d, d);
  check_matrix("w_o", p.w_o, d, d);
  const std::size_t t_k = x_beta.dim(0);
  if (key_mask.defined()) {
    if (key_mask.numel() != t_k) {
      fail(ErrorCode::kDimension, "key mask " + nn::shape_str(key_mask.shape()) + " does not cover " +
                                      std::to_string(t_k) + " keys");
    }
    bool any = false;
    for (double v : key_mask.data()) any = any || v != 0.0;
    if (!any) fail(ErrorCode::kDimension, "attention key mask excludes every key");
  }

  const std::size_t d_k = d / p.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
  Tensor q = nn::matmul(x_alpha, p.w_q);
  Tensor k = nn::matmul(x_beta, p.w_k);
  Tensor v = nn::matmul(x_beta, p.w_v);

  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor qh = p.heads == 1 ? q : nn::slice(q, 1, h * d_k, (h + 1) * d_k);
    Tensor kh = p.heads == 1 ? k : nn::slice(k, 1, h * d_k, (h + 1) * d_k);
    Tensor vh = p.heads == 1 ? v : nn::slice(v, 1, h * d_k, (h + 1) * d_k);
    Tensor scores = nn::scale(nn::matmul(qh, nn::transpose(kh)), inv_sqrt_dk);
    Tensor weights = nn::softmax_lastdim(scores, key_mask);
    if (trace) trace->weights.push_back(weights);
    heads.push_back(nn::matmul(weights, vh));
  }
  Tensor merged = heads.size() == 1 ? heads.front() : nn::concat(heads, 1);
  return nn::matmul(merged, p.w_o);
}

Tensor transformer_layer(const Tensor& q_stream, const Tensor& kv_source, const TransformerLayerParams& p,
                         const Tensor& key_mask, AttentionTrace* trace) {
  const auto& an = p.attn_norm;
  Tensor nq = nn::layer_norm(q_stream, an.gain, an.shift);
  Tensor nkv = q_stream.same_storage(kv_source) ? nq : nn::layer_norm(kv_source, an.gain, an.shift);
  Tensor x1 = nn::add(q_stream, cross_modal_attention(nq, nkv, p.attn, key_mask, trace));
  Tensor hidden = nn::gelu(nn::linear(nn::layer_norm(x1, p.ffn_norm.gain, p.ffn_norm.shift), p.ffn.w1, p.ffn.b1));
  return nn::add(x1, nn::linear(hidden, p.ffn.w2, p.ffn.b2));
}

Tensor cmt_stack(const Tensor& initial_q, const Tensor& source, const TransformerStack& layers,
                 const Tensor& key_mask) {
  if (layers.empty()) fail(ErrorCode::kConfig, "transformer stack depth must be at least 1");
  Tensor stream = initial_q;
  for (const auto& layer : layers) stream = transformer_layer(stream, source, layer, key_mask);
  return stream;
}

Tensor mask_column(const Tensor& step_mask, std::size_t m) {
  const std::size_t t = step_mask.dim(0);
  Tensor out = Tensor::zeros({t});
  auto v = out.mutable_data();
  for (std::size_t r = 0; r < t; ++r) v[r] = step_mask.at(r, m);
  return out;
}

InteractionOutput min_forward(const AugmentedFeatures& aug, const MinParams& p) {
  InteractionOutput out;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const Tensor key_mask = mask_column(aug.mask, m);
    Tensor y_c = cmt_stack(aug.x_c, aug.x_p[m], p.cmt[m], key_mask);
    Tensor y_p = cmt_stack(aug.x_p[m], aug.x_p[m], p.smt[m], key_mask);
    out.y[m] = nn::mean_stack({y_c, y_p});
  }
  return out;
}

TransformerLayerParams make_transformer_layer(const MinShape& shape, nn::Rng& rng, InitScheme scheme) {
  const std::size_t d = shape.d;
  const std::size_t d_ff = shape.d_ff;
  if (d == 0 || d_ff == 0) fail(ErrorCode::kConfig, "transformer widths must be positive");
  if (shape.heads == 0 || d % shape.heads != 0) {
    fail(ErrorCode::kConfig, "d=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(shape.heads));
  }
  TransformerLayerParams p;
  p.attn.heads = shape.heads;
  if (scheme == InitScheme::kZero) {
    p.attn.w_q = Tensor::zeros({d, d});
    p.attn.w_k = Tensor::zeros({d, d});
    p.attn.w_v = Tensor::zeros({d, d});
    p.attn.w_o = Tensor::zeros({d, d});
    p.ffn.w1 = Tensor::zeros({d, d_ff});
    p.ffn.w2 = Tensor::zeros({d_ff, d});
  } else {
    p.attn.w_q = uniform_matrix(d, d, rng);
    p.attn.w_k = uniform_matrix(d, d, rng);
    p.attn.w_v = uniform_matrix(d, d, rng);
    p.ffn.w1 = uniform_matrix(d, d_ff, rng);
    const bool dense = scheme == InitScheme::kDense;
    p.attn.w_o = dense ? uniform_matrix(d, d, rng) : Tensor::zeros({d, d});
    p.ffn.w2 = dense ? uniform_matrix(d_ff, d, rng) : Tensor::zeros({d_ff, d});
  }
  if (scheme == InitScheme::kDense) {
    p.ffn.b1 = uniform_vector(d_ff, 0.0, 0.1, rng);
    p.ffn.b2 = uniform_vector(d, 0.0, 0.1, rng);
    p.attn_norm = {uniform_vector(d, 1.0, 0.1, rng), uniform_vector(d, 0.0, 0.1, rng)};
    p.ffn_norm = {uniform_vector(d, 1.0, 0.1, rng), uniform_vector(d, 0.0, 0.1, rng)};
  } else {
    p.ffn.b1 = Tensor::zeros({d_ff});
    p.ffn.b2 = Tensor::zeros({d});
    p.attn_norm = {Tensor::full({d}, 1.0), Tensor::zeros({d})};
    p.ffn_norm = {Tensor::full({d}, 1.0), Tensor::zeros({d})};
  }
  for (Tensor* t : {&p.attn.w_q, &p.attn.w_k, &p.attn.w_v, &p.attn.w_o, &p.ffn.w1, &p.ffn.b1, &p.ffn.w2,
                    &p.ffn.b2, &p.attn_norm.gain, &p.attn_norm.shift, &p.ffn_norm.gain, &p.ffn_norm.shift}) {
    *t = param(*t);
  }
  return p;
}

MinParams make_min_params(const MinShape& shape, nn::Rng& rng, InitScheme scheme) {
  if (shape.depth == 0) fail(ErrorCode::kConfig, "MIN depth must be at least 1");
  MinParams p;
  for (auto* group : {&p.cmt, &p.smt}) {
    for (auto& stack : *group) {
      for (std::size_t l = 0; l < shape.depth; ++l) stack.push_back(make_transformer_layer(shape, rng, scheme));
    }
  }
  return p;
}

}  // namespace aimdit
