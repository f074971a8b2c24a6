// Copyright (c) 2026 The spkembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKEMBED_CONFORMER_H_
#define SPKEMBED_CONFORMER_H_

#include <cmath>
#include <string>
#include <vector>

#include "spkembed/errors.h"
#include "spkembed/optim.h"
#include "spkembed/tensor.h"

namespace spkembed::nn {

// Macaron conformer block: half feed-forward, multi-head self-attention,
// depthwise convolution module, half feed-forward, final layer norm. All
// residual. An optional per-utterance vector can be added to the MHSA module
// input, broadcast over time; that hook is the speaker-embedding integration
// point.
template <typename T>
class ConformerBlock {
 public:
  ConformerBlock(num::ParamStore<T>& params, const std::string& prefix,
                 size_t d_model, size_t heads, size_t ff_dim, size_t conv_kernel)
      : d_model_(d_model), heads_(heads), conv_kernel_(conv_kernel) {
    Require<ConfigError>(d_model % heads == 0,
                         prefix, ": d_model must be divisible by heads");
    Require<ConfigError>(conv_kernel % 2 == 1,
                         prefix, ": conv kernel must be odd");
    auto ln = [&](const std::string& name) {
      return std::pair<num::Tensor<T>, num::Tensor<T>>{
          params.Create(prefix + "." + name + ".g", {d_model}, num::Init::kOnes),
          params.Create(prefix + "." + name + ".b", {d_model}, num::Init::kZeros)};
    };
    auto affine = [&](const std::string& name, size_t in, size_t out) {
      return std::pair<num::Tensor<T>, num::Tensor<T>>{
          params.CreateAffineWeight(prefix + "." + name + ".w", in, out),
          params.Create(prefix + "." + name + ".b", {out}, num::Init::kZeros)};
    };
    ff1_ln_ = ln("ff1_ln");
    ff1_a_ = affine("ff1_a", d_model, ff_dim);
    ff1_b_ = affine("ff1_b", ff_dim, d_model);
    attn_ln_ = ln("attn_ln");
    wq_ = affine("attn_q", d_model, d_model);
    wk_ = affine("attn_k", d_model, d_model);
    wv_ = affine("attn_v", d_model, d_model);
    wo_ = affine("attn_o", d_model, d_model);
    conv_ln_ = ln("conv_ln");
    conv_pw1_ = affine("conv_pw1", d_model, 2 * d_model);
    conv_dw_ = params.Create(prefix + ".conv_dw.w", {conv_kernel, d_model},
                             num::Init::kNormalScaled,
                             1.0 / std::sqrt(static_cast<double>(conv_kernel)));
    conv_norm_g_ = params.Create(prefix + ".conv_norm.g", {d_model}, num::Init::kOnes);
    conv_norm_b_ = params.Create(prefix + ".conv_norm.b", {d_model}, num::Init::kZeros);
    conv_pw2_ = affine("conv_pw2", d_model, d_model);
    ff2_ln_ = ln("ff2_ln");
    ff2_a_ = affine("ff2_a", d_model, ff_dim);
    ff2_b_ = affine("ff2_b", ff_dim, d_model);
    out_ln_ = ln("out_ln");
  }

  num::Tensor<T> Forward(const num::Tensor<T>& x,
                         const num::Tensor<T>* mhsa_input_add = nullptr) const {
    using namespace num;  // NOLINT
    auto x1 = Add(x, Scale(FeedForward(LayerNormRows(x, ff1_ln_.first, ff1_ln_.second),
                                       ff1_a_, ff1_b_),
                           0.5));
    auto attn_in = LayerNormRows(x1, attn_ln_.first, attn_ln_.second);
    if (mhsa_input_add != nullptr)
      attn_in = AddRowVec(attn_in, *mhsa_input_add);
    auto x2 = Add(x1, SelfAttention(attn_in));
    auto x3 = Add(x2, ConvModule(LayerNormRows(x2, conv_ln_.first, conv_ln_.second)));
    auto x4 = Add(x3, Scale(FeedForward(LayerNormRows(x3, ff2_ln_.first, ff2_ln_.second),
                                        ff2_a_, ff2_b_),
                            0.5));
    return LayerNormRows(x4, out_ln_.first, out_ln_.second);
  }

  size_t d_model() const { return d_model_; }

 private:
  using AffinePair = std::pair<num::Tensor<T>, num::Tensor<T>>;

  static num::Tensor<T> Affine(const num::Tensor<T>& x, const AffinePair& p) {
    return num::AddRowVec(num::MatMul(x, p.first), p.second);
  }

  static num::Tensor<T> FeedForward(const num::Tensor<T>& x, const AffinePair& a,
                                    const AffinePair& b) {
    return Affine(num::Swish(Affine(x, a)), b);
  }

  num::Tensor<T> SelfAttention(const num::Tensor<T>& x) const {
    using namespace num;  // NOLINT
    size_t head_dim = d_model_ / heads_;
    auto q = Affine(x, wq_);
    auto k = Affine(x, wk_);
    auto v = Affine(x, wv_);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Tensor<T> ctx;
    for (size_t h = 0; h < heads_; ++h) {
      auto qh = SliceCols(q, h * head_dim, head_dim);
      auto kh = SliceCols(k, h * head_dim, head_dim);
      auto vh = SliceCols(v, h * head_dim, head_dim);
      auto scores = Scale(MatMul(qh, Transpose(kh)), inv_sqrt);
      auto ctx_h = MatMul(Softmax(scores), vh);
      ctx = h == 0 ? ctx_h : ConcatCols(ctx, ctx_h);
    }
    return Affine(ctx, wo_);
  }

  // Pointwise expansion with GLU gate, depthwise conv over time (same
  // padding), per-channel norm, swish, pointwise projection.
  num::Tensor<T> ConvModule(const num::Tensor<T>& x) const {
    using namespace num;  // NOLINT
    size_t rows = x.Rows();
    auto expanded = Affine(x, conv_pw1_);  // T x 2d
    auto a = SliceCols(expanded, 0, d_model_);
    auto gate = SliceCols(expanded, d_model_, d_model_);
    auto u = Mul(a, Sigmoid(gate));
    size_t pad = (conv_kernel_ - 1) / 2;
    auto zeros = Tensor<T>::Zeros({pad, d_model_});
    auto padded = ConcatRows(ConcatRows(zeros, u), zeros);
    Tensor<T> conv;
    for (size_t j = 0; j < conv_kernel_; ++j) {
      auto tap = MulRowVec(SliceRows(padded, j, rows),
                           Reshape(SliceRows(conv_dw_, j, 1), {d_model_}));
      conv = j == 0 ? tap : Add(conv, tap);
    }
    auto normed = ChanNormCols(conv, conv_norm_g_, conv_norm_b_);
    return Affine(Swish(normed), conv_pw2_);
  }

  size_t d_model_;
  size_t heads_;
  size_t conv_kernel_;
  AffinePair ff1_ln_, ff1_a_, ff1_b_;
  AffinePair attn_ln_;
  AffinePair wq_, wk_, wv_, wo_;
  AffinePair conv_ln_;
  AffinePair conv_pw1_;
  num::Tensor<T> conv_dw_;
  num::Tensor<T> conv_norm_g_, conv_norm_b_;
  AffinePair conv_pw2_;
  AffinePair ff2_ln_, ff2_a_, ff2_b_;
  AffinePair out_ln_;
};

// Fixed sinusoidal position encoding, T x d.
template <typename T>
num::Tensor<T> PositionEncoding(size_t rows, size_t d_model) {
  std::vector<T> pe(rows * d_model);
  for (size_t t = 0; t < rows; ++t) {
    for (size_t i = 0; i < d_model; ++i) {
      double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
      pe[t * d_model + i] =
          static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return num::Tensor<T>::FromVector(std::move(pe), {rows, d_model});
}

}  // namespace spkembed::nn

#endif  // SPKEMBED_CONFORMER_H_
