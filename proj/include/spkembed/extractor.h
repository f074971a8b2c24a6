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

#ifndef SPKEMBED_EXTRACTOR_H_
#define SPKEMBED_EXTRACTOR_H_

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "spkembed/conformer.h"
#include "spkembed/errors.h"
#include "spkembed/mat.h"
#include "spkembed/optim.h"
#include "spkembed/pooling.h"
#include "spkembed/tensor.h"

namespace spkembed::nn {

enum class ExtractorArch { kTdnn, kMfaConformer };

inline ExtractorArch ParseExtractorArch(const std::string& s) {
  if (s == "tdnn") return ExtractorArch::kTdnn;
  if (s == "mfa_conformer") return ExtractorArch::kMfaConformer;
  throw ConfigError(StrCat("extractor must be tdnn|mfa_conformer, got ", s));
}

struct TdnnLayerSpec {
  std::vector<int> offsets;  // context offsets in frames, e.g. {-2,0,2}
  int out_dim = 64;
};

struct ExtractorConfig {
  ExtractorArch arch = ExtractorArch::kTdnn;
  int input_dim = 40;
  int num_speakers = 20;
  pool::PoolingKind pooling = pool::PoolingKind::kAttentiveStatistics;
  int attention_hidden = pool::kDefaultAttentionHidden;
  int bottleneck_dim = 512;

  std::vector<TdnnLayerSpec> tdnn_layers;  // arch == kTdnn

  int blocks = 6;        // arch == kMfaConformer
  int d_model = 384;
  int heads = 6;
  int ff_dim = 1536;
  int conv_kernel = 7;

  bool reconstruction_branch = false;
  double reconstruction_dropout = 0.1;

  // Classic five-layer x-vector context pattern; widths differ per preset.
  static std::vector<TdnnLayerSpec> TdnnLayerPattern(int width_frame,
                                                     int width_last) {
    return {{{-2, -1, 0, 1, 2}, width_frame},
            {{-2, 0, 2}, width_frame},
            {{-3, 0, 3}, width_frame},
            {{0}, width_frame},
            {{0}, width_last}};
  }

  static ExtractorConfig Tdnn(const std::string& preset, int input_dim,
                              int num_speakers) {
    ExtractorConfig cfg;
    cfg.arch = ExtractorArch::kTdnn;
    cfg.input_dim = input_dim;
    cfg.num_speakers = num_speakers;
    if (preset == "paper") {
      cfg.tdnn_layers = TdnnLayerPattern(512, 1500);
      cfg.bottleneck_dim = 512;
    } else if (preset == "desk") {
      cfg.tdnn_layers = TdnnLayerPattern(64, 64);
      cfg.bottleneck_dim = 64;
    } else {
      throw ConfigError(StrCat("extractor preset must be paper|desk, got ", preset));
    }
    return cfg;
  }

  static ExtractorConfig MfaConformer(const std::string& preset, int input_dim,
                                      int num_speakers) {
    ExtractorConfig cfg;
    cfg.arch = ExtractorArch::kMfaConformer;
    cfg.input_dim = input_dim;
    cfg.num_speakers = num_speakers;
    if (preset == "paper") {
      cfg.blocks = 6;
      cfg.d_model = 384;
      cfg.heads = 6;
      cfg.ff_dim = 1536;
      cfg.bottleneck_dim = 512;
    } else if (preset == "desk") {
      cfg.blocks = 2;
      cfg.d_model = 64;
      cfg.heads = 4;
      cfg.ff_dim = 256;
      cfg.bottleneck_dim = 64;
    } else {
      throw ConfigError(StrCat("extractor preset must be paper|desk, got ", preset));
    }
    return cfg;
  }

  // Width of the frame-level representation below the pooling layer: the last
  // TDNN layer, or the concatenation of every conformer block output.
  int FrameReprDim() const {
    if (arch == ExtractorArch::kTdnn) return tdnn_layers.back().out_dim;
    return blocks * d_model;
  }

  // Total receptive span of the TDNN stack; frame output length is
  // T' = T - (ContextSpan() - 1). The conformer path preserves T.
  int ContextSpan() const {
    if (arch != ExtractorArch::kTdnn) return 1;
    int left = 0, right = 0;
    for (const auto& layer : tdnn_layers) {
      left += -*std::min_element(layer.offsets.begin(), layer.offsets.end());
      right += *std::max_element(layer.offsets.begin(), layer.offsets.end());
    }
    return left + right + 1;
  }

  int LeftContext() const {
    if (arch != ExtractorArch::kTdnn) return 0;
    int left = 0;
    for (const auto& layer : tdnn_layers)
      left += -*std::min_element(layer.offsets.begin(), layer.offsets.end());
    return left;
  }
};

// Speaker-embedding extractor: frame stack, temporal pooling, bottleneck
// whose pre-activation output is the embedding, softmax classifier over
// training speakers, and an optional reconstruction branch that maps the
// frame representation back to the input features.
template <typename T>
class SpeakerExtractor {
 public:
  struct ForwardResult {
    num::Tensor<T> logits;      // num_speakers
    num::Tensor<T> frame_repr;  // T' x FrameReprDim
    num::Tensor<T> embedding;   // bottleneck_dim, pre-activation
  };

  SpeakerExtractor(const ExtractorConfig& cfg, uint64_t seed)
      : cfg_(cfg), params_(seed) {
    if (cfg_.arch == ExtractorArch::kTdnn) {
      Require<ConfigError>(!cfg_.tdnn_layers.empty(),
                           "tdnn extractor needs at least one frame layer");
      int in = cfg_.input_dim;
      for (size_t i = 0; i < cfg_.tdnn_layers.size(); ++i) {
        const auto& layer = cfg_.tdnn_layers[i];
        std::string p = StrCat("frame", i);
        size_t fan_in = layer.offsets.size() * static_cast<size_t>(in);
        params_.CreateAffineWeight(p + ".w", fan_in,
                                   static_cast<size_t>(layer.out_dim));
        params_.Create(p + ".b", {static_cast<size_t>(layer.out_dim)},
                       num::Init::kZeros);
        params_.Create(p + ".ln.g", {static_cast<size_t>(layer.out_dim)},
                       num::Init::kOnes);
        params_.Create(p + ".ln.b", {static_cast<size_t>(layer.out_dim)},
                       num::Init::kZeros);
        in = layer.out_dim;
      }
    } else {
      params_.CreateAffineWeight("input.w", cfg_.input_dim, cfg_.d_model);
      params_.Create("input.b", {static_cast<size_t>(cfg_.d_model)},
                     num::Init::kZeros);
      for (int i = 0; i < cfg_.blocks; ++i)
        blocks_.push_back(std::make_unique<ConformerBlock<T>>(
            params_, StrCat("block", i), cfg_.d_model, cfg_.heads, cfg_.ff_dim,
            cfg_.conv_kernel));
      size_t agg = static_cast<size_t>(cfg_.FrameReprDim());
      params_.Create("mfa_ln.g", {agg}, num::Init::kOnes);
      params_.Create("mfa_ln.b", {agg}, num::Init::kZeros);
    }

    size_t frame_dim = static_cast<size_t>(cfg_.FrameReprDim());
    if (pool::UsesAttention(cfg_.pooling)) {
      size_t hidden = static_cast<size_t>(cfg_.attention_hidden);
      // hidden x frame_dim, the orientation AttentionParams expects.
      params_.Create("pool.attn_w", {hidden, frame_dim}, num::Init::kNormalScaled,
                     1.0 / std::sqrt(static_cast<double>(frame_dim)));
      params_.Create("pool.attn_b", {hidden}, num::Init::kZeros);
      params_.Create("pool.attn_v", {hidden}, num::Init::kNormalScaled, 0.1);
    }
    size_t pooled = pool::PooledDim(cfg_.pooling, frame_dim);
    params_.CreateAffineWeight("bottleneck.w", pooled,
                               static_cast<size_t>(cfg_.bottleneck_dim));
    params_.Create("bottleneck.b", {static_cast<size_t>(cfg_.bottleneck_dim)},
                   num::Init::kZeros);
    params_.CreateAffineWeight("classifier.w",
                               static_cast<size_t>(cfg_.bottleneck_dim),
                               static_cast<size_t>(cfg_.num_speakers));
    params_.Create("classifier.b", {static_cast<size_t>(cfg_.num_speakers)},
                   num::Init::kZeros);
    if (cfg_.reconstruction_branch) {
      params_.CreateAffineWeight("recon.w", frame_dim,
                                 static_cast<size_t>(cfg_.input_dim));
      params_.Create("recon.b", {static_cast<size_t>(cfg_.input_dim)},
                     num::Init::kZeros);
    }
  }

  ForwardResult Forward(const Mat& feats) const {
    Require<ShapeError>(static_cast<int>(feats.cols) == cfg_.input_dim,
                        "utterance has ", feats.cols, " features, model expects ",
                        cfg_.input_dim);
    auto x = num::Tensor<T>::FromMat(feats);
    num::Tensor<T> h = cfg_.arch == ExtractorArch::kTdnn ? TdnnStack(x)
                                                         : MfaStack(x);
    auto pooled = PoolFrames(h);
    auto embedding = num::AddRowVec(
        num::MatMul(num::Reshape(pooled, {1, pooled.Size()}),
                    params_.Get("bottleneck.w").value),
        params_.Get("bottleneck.b").value);
    embedding = num::Reshape(embedding,
                             {static_cast<size_t>(cfg_.bottleneck_dim)});
    auto logits = num::AddRowVec(
        num::MatMul(num::Reshape(num::Relu(embedding),
                                 {1, static_cast<size_t>(cfg_.bottleneck_dim)}),
                    params_.Get("classifier.w").value),
        params_.Get("classifier.b").value);
    return {num::Reshape(logits, {static_cast<size_t>(cfg_.num_speakers)}), h,
            embedding};
  }

  // Cross-entropy against the utterance's speaker index.
  num::Tensor<T> CeLoss(const num::Tensor<T>& logits, int speaker_index) const {
    Require<UsageError>(speaker_index >= 0 && speaker_index < cfg_.num_speakers,
                        "speaker index ", speaker_index, " out of range");
    return num::Scale(num::Pick(num::LogSoftmax(logits),
                                static_cast<size_t>(speaker_index)),
                      -1.0);
  }

  // Mean over frames of half the summed squared reconstruction error against
  // the (time-aligned) input features. Dropout applies to the branch input
  // while training.
  num::Tensor<T> ReconstructionLoss(const num::Tensor<T>& frame_repr,
                                    const Mat& feats, bool training,
                                    Rng* rng) const {
    Require<UsageError>(cfg_.reconstruction_branch,
                        "model has no reconstruction branch");
    size_t t_out = frame_repr.Rows();
    auto target = num::Tensor<T>::FromMat(feats);
    if (t_out != feats.rows) {
      // TDNN context shrinks T; crop the target to the frames whose full
      // receptive field was seen.
      size_t left = static_cast<size_t>(cfg_.LeftContext());
      target = num::SliceRows(target, left, t_out);
    }
    auto h = frame_repr;
    if (training && cfg_.reconstruction_dropout > 0.0) {
      Require<UsageError>(rng != nullptr, "training-mode dropout needs an rng");
      h = num::Dropout(h, cfg_.reconstruction_dropout, *rng);
    }
    auto projected = num::AddRowVec(num::MatMul(h, params_.Get("recon.w").value),
                                    params_.Get("recon.b").value);
    auto diff = num::Sub(projected, target);
    // 0.5 * sum over features, mean over frames.
    return num::Scale(num::Mean(num::Mul(diff, diff)),
                      0.5 * static_cast<double>(feats.cols));
  }

  // Deterministic utterance-level embedding; no training-time stochasticity.
  std::vector<float> ExtractEmbedding(const Mat& feats) const {
    auto result = Forward(feats);
    const auto& v = result.embedding.Value();
    return std::vector<float>(v.begin(), v.end());
  }

  num::ParamStore<T>& Params() { return params_; }
  const num::ParamStore<T>& Params() const { return params_; }
  const ExtractorConfig& Config() const { return cfg_; }

 private:
  num::Tensor<T> TdnnStack(const num::Tensor<T>& x) const {
    num::Tensor<T> h = x;
    for (size_t i = 0; i < cfg_.tdnn_layers.size(); ++i) {
      const auto& layer = cfg_.tdnn_layers[i];
      std::string p = StrCat("frame", i);
      auto unfolded = Unfold(h, layer.offsets);
      auto z = num::AddRowVec(num::MatMul(unfolded, params_.Get(p + ".w").value),
                              params_.Get(p + ".b").value);
      h = num::LayerNormRows(num::Relu(z), params_.Get(p + ".ln.g").value,
                             params_.Get(p + ".ln.b").value);
    }
    return h;
  }

  // Gather context windows: rows t' of the output are the concatenation of
  // input rows t' + offset - min_offset for each offset.
  static num::Tensor<T> Unfold(const num::Tensor<T>& x,
                               const std::vector<int>& offsets) {
    int min_off = *std::min_element(offsets.begin(), offsets.end());
    int max_off = *std::max_element(offsets.begin(), offsets.end());
    int span = max_off - min_off + 1;
    Require<ShapeError>(static_cast<int>(x.Rows()) >= span,
                        "utterance too short for context span ", span, ": T=",
                        x.Rows());
    size_t t_out = x.Rows() - static_cast<size_t>(span) + 1;
    num::Tensor<T> out;
    for (int off : offsets) {
      auto part = num::SliceRows(x, static_cast<size_t>(off - min_off), t_out);
      out = out.Defined() ? num::ConcatCols(out, part) : part;
    }
    return out;
  }

  num::Tensor<T> MfaStack(const num::Tensor<T>& x) const {
    auto h = num::AddRowVec(num::MatMul(x, params_.Get("input.w").value),
                            params_.Get("input.b").value);
    h = num::Add(h, PositionEncoding<T>(h.Rows(), cfg_.d_model));
    num::Tensor<T> agg;
    for (const auto& block : blocks_) {
      h = block->Forward(h);
      agg = agg.Defined() ? num::ConcatCols(agg, h) : h;
    }
    return num::LayerNormRows(agg, params_.Get("mfa_ln.g").value,
                              params_.Get("mfa_ln.b").value);
  }

  num::Tensor<T> PoolFrames(const num::Tensor<T>& h) const {
    if (pool::UsesAttention(cfg_.pooling)) {
      pool::AttentionParams<T> attn{params_.Get("pool.attn_w").value,
                                    params_.Get("pool.attn_b").value,
                                    params_.Get("pool.attn_v").value};
      return pool::Pool(h, cfg_.pooling, &attn);
    }
    return pool::Pool(h, cfg_.pooling);
  }

  ExtractorConfig cfg_;
  num::ParamStore<T> params_;
  std::vector<std::unique_ptr<ConformerBlock<T>>> blocks_;
};

}  // namespace spkembed::nn

#endif  // SPKEMBED_EXTRACTOR_H_
