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

#ifndef SPKEMBED_POOLING_H_
#define SPKEMBED_POOLING_H_

#include <string>

#include "spkembed/errors.h"
#include "spkembed/tensor.h"

namespace spkembed::pool {

// Temporal pooling: frame-level H [T x F] -> one utterance-level vector.
//   average              mean over frames                          -> F
//   statistics           mean ++ population stddev                 -> 2F
//   attention            softmax(v' tanh(W h_t + b)) weighted mean -> F
//   attentive_statistics attention-weighted mean ++ stddev         -> 2F
enum class PoolingKind { kAverage, kStatistics, kAttention, kAttentiveStatistics };

inline constexpr double kVarianceEps = 1e-10;
inline constexpr int kDefaultAttentionHidden = 128;

inline PoolingKind ParsePoolingKind(const std::string& s) {
  if (s == "average") return PoolingKind::kAverage;
  if (s == "statistics") return PoolingKind::kStatistics;
  if (s == "attention") return PoolingKind::kAttention;
  if (s == "attentive_statistics") return PoolingKind::kAttentiveStatistics;
  throw ConfigError(StrCat(
      "pooling must be one of average|statistics|attention|attentive_statistics, got ",
      s));
}

inline std::string PoolingKindName(PoolingKind k) {
  switch (k) {
    case PoolingKind::kAverage: return "average";
    case PoolingKind::kStatistics: return "statistics";
    case PoolingKind::kAttention: return "attention";
    case PoolingKind::kAttentiveStatistics: return "attentive_statistics";
  }
  return "?";
}

inline bool UsesAttention(PoolingKind k) {
  return k == PoolingKind::kAttention || k == PoolingKind::kAttentiveStatistics;
}

inline size_t PooledDim(PoolingKind k, size_t frame_dim) {
  switch (k) {
    case PoolingKind::kAverage:
    case PoolingKind::kAttention:
      return frame_dim;
    case PoolingKind::kStatistics:
    case PoolingKind::kAttentiveStatistics:
      return 2 * frame_dim;
  }
  return 0;
}

// Single-context attention scores over frames: alpha = softmax(v' tanh(W h + b)).
template <typename T>
struct AttentionParams {
  num::Tensor<T> w;  // hidden x F
  num::Tensor<T> b;  // hidden
  num::Tensor<T> v;  // hidden
};

template <typename T>
num::Tensor<T> AttentionWeights(const num::Tensor<T>& frames,
                                const AttentionParams<T>& attn) {
  Require<ShapeError>(attn.w.Rank() == 2 && attn.w.Cols() == frames.Cols(),
                      "attention projection expects ", frames.Cols(),
                      " input features, got ", attn.w.Cols());
  Require<ShapeError>(attn.b.Size() == attn.w.Rows() && attn.v.Size() == attn.w.Rows(),
                      "attention bias/context size must match hidden dim");
  auto hidden = num::Tanh(num::AddRowVec(num::MatMul(frames, num::Transpose(attn.w)),
                                         attn.b));  // T x hidden
  auto scores = num::MatVec(hidden, attn.v);        // T
  return num::Softmax(scores);
}

template <typename T>
num::Tensor<T> Pool(const num::Tensor<T>& frames, PoolingKind kind,
                    const AttentionParams<T>* attn = nullptr,
                    double eps = kVarianceEps) {
  Require<ShapeError>(frames.Rank() == 2, "pooling expects a T x F matrix");
  Require<UsageError>(frames.Rows() >= 1, "pooling over an empty sequence");
  switch (kind) {
    case PoolingKind::kAverage:
      return num::MeanCols(frames);
    case PoolingKind::kStatistics: {
      auto mean = num::MeanCols(frames);
      auto stddev = num::SqrtGuarded(num::VarCols(frames), eps);
      return num::Concat(mean, stddev);
    }
    case PoolingKind::kAttention: {
      Require<UsageError>(attn != nullptr, "attention pooling requires params");
      auto alpha = AttentionWeights(frames, *attn);
      return num::VecMat(alpha, frames);
    }
    case PoolingKind::kAttentiveStatistics: {
      Require<UsageError>(attn != nullptr, "attentive statistics pooling requires params");
      auto alpha = AttentionWeights(frames, *attn);
      auto mean = num::VecMat(alpha, frames);                       // weighted mean
      auto second = num::VecMat(alpha, num::Mul(frames, frames));   // weighted E[h^2]
      auto variance = num::Sub(second, num::Mul(mean, mean));
      return num::Concat(mean, num::SqrtGuarded(variance, eps));
    }
  }
  throw UsageError("unreachable pooling kind");
}

}  // namespace spkembed::pool

#endif  // SPKEMBED_POOLING_H_
