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

#ifndef SPKEMBED_ADAPTATION_H_
#define SPKEMBED_ADAPTATION_H_

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "spkembed/conformer.h"
#include "spkembed/corpus.h"
#include "spkembed/errors.h"
#include "spkembed/postproc.h"
#include "spkembed/rng.h"

namespace spkembed::adapt {

// x'_t = x_t + w * (W_e e) for every frame t. The building block of the
// speaker-embedding integration; in the acoustic model the same addition is
// applied to the self-attention module input inside each adapted block.
template <typename T>
num::Tensor<T> WeightedSimpleAdd(const num::Tensor<T>& x, const num::Tensor<T>& e,
                                 const num::Tensor<T>& projection,
                                 const num::Tensor<T>& weight) {
  Require<ShapeError>(projection.Rank() == 2 && projection.Cols() == e.Size(),
                      "weighted add: projection expects embedding dim ",
                      projection.Cols(), ", got ", e.Size());
  Require<ShapeError>(x.Rank() == 2 && x.Cols() == projection.Rows(),
                      "weighted add: frame dim ", x.Cols(),
                      " does not match projection output ", projection.Rows());
  return num::AddRowVec(x, num::ScaleT(num::MatVec(projection, e), weight));
}

enum class SourceKind { kNone, kLearned, kGaussianNoise, kConcatenated };

// Per-recording auxiliary vectors fed to the adapted acoustic model.
struct EmbeddingSource {
  SourceKind kind = SourceKind::kNone;
  int dim = 0;
  std::map<std::string, std::vector<float>> by_recording;

  const std::vector<float>& Lookup(const std::string& recording_id) const {
    auto it = by_recording.find(recording_id);
    Require<UsageError>(it != by_recording.end(),
                        "no embedding for recording ", recording_id,
                        "; provide an embedding source covering every recording");
    return it->second;
  }
};

// One frozen standard-normal vector per recording, fixed by (seed, id):
// the noise control stays identical across epochs and runs.
inline EmbeddingSource MakeNoiseSource(int dim, uint64_t seed,
                                       const std::vector<std::string>& recording_ids) {
  Require<ConfigError>(dim >= 1, "noise embedding dim must be positive, got ", dim);
  EmbeddingSource src;
  src.kind = SourceKind::kGaussianNoise;
  src.dim = dim;
  for (const auto& rec : recording_ids) {
    Rng rng(FoldSeed(seed, "noise_embedding." + rec));
    std::vector<float> v(dim);
    rng.FillGaussian(v, 1.0);
    src.by_recording.emplace(rec, std::move(v));
  }
  return src;
}

inline EmbeddingSource SourceFromEmbeddings(const post::EmbeddingSet& set) {
  Require<UsageError>(!set.empty(), "embedding source from an empty set");
  EmbeddingSource src;
  src.kind = SourceKind::kLearned;
  src.dim = static_cast<int>(set.front().vec.size());
  for (const auto& e : set) {
    Require<UsageError>(e.level == post::Level::kRecording,
                        "embedding source needs recording-level embeddings, got ",
                        post::LevelName(e.level), " for ", e.id);
    Require<ShapeError>(static_cast<int>(e.vec.size()) == src.dim,
                        "inconsistent embedding dims in source");
    src.by_recording[e.recording_id] = e.vec;
  }
  return src;
}

// Per-key concatenation in declared order; the key sets must align exactly.
inline EmbeddingSource ConcatSources(const std::vector<EmbeddingSource>& sources) {
  Require<UsageError>(!sources.empty(), "concat of zero embedding sources");
  if (sources.size() == 1) return sources.front();
  std::set<std::string> keys;
  for (const auto& [rec, v] : sources.front().by_recording) keys.insert(rec);
  for (size_t i = 1; i < sources.size(); ++i) {
    std::string missing;
    for (const auto& rec : keys)
      if (!sources[i].by_recording.count(rec))
        missing += StrCat(" ", rec, "(missing in source ", i, ")");
    for (const auto& [rec, v] : sources[i].by_recording)
      if (!keys.count(rec))
        missing += StrCat(" ", rec, "(missing in source 0)");
    Require<UsageError>(missing.empty(),
                        "embedding sources do not align:", missing);
  }
  EmbeddingSource out;
  out.kind = SourceKind::kConcatenated;
  for (const auto& s : sources) out.dim += s.dim;
  for (const auto& rec : keys) {
    std::vector<float> v;
    v.reserve(out.dim);
    for (const auto& s : sources) {
      const auto& part = s.by_recording.at(rec);
      v.insert(v.end(), part.begin(), part.end());
    }
    out.by_recording.emplace(rec, std::move(v));
  }
  return out;
}

enum class IntegrationSite { kAllBlocks, kFirstBlock };

inline IntegrationSite ParseIntegrationSite(const std::string& s) {
  if (s == "all_blocks") return IntegrationSite::kAllBlocks;
  if (s == "first_block") return IntegrationSite::kFirstBlock;
  throw ConfigError(StrCat("am.integration must be all_blocks|first_block, got ", s));
}

struct AmConfig {
  int input_dim = 40;
  int num_classes = corpus::kContentClasses;
  int blocks = 4;
  int d_model = 64;
  int heads = 4;
  int ff_dim = 256;
  int conv_kernel = 7;
  IntegrationSite site = IntegrationSite::kAllBlocks;
  int embedding_dim = 0;  // 0: plain baseline without integration parameters
  double weight_init = 0.5;
  bool freeze_weight_at_zero = false;

  static AmConfig Desk(int input_dim, int num_classes, int embedding_dim) {
    AmConfig cfg;
    cfg.input_dim = input_dim;
    cfg.num_classes = num_classes;
    cfg.embedding_dim = embedding_dim;
    return cfg;
  }
};

// Frame classifier: conformer stack over the input features with the
// weighted speaker embedding added to each adapted block's MHSA input,
// then an affine layer to per-frame class logits.
template <typename T>
class AdaptedAm {
 public:
  AdaptedAm(const AmConfig& cfg, uint64_t seed) : cfg_(cfg), params_(seed) {
    params_.CreateAffineWeight("input.w", cfg_.input_dim, cfg_.d_model);
    params_.Create("input.b", {static_cast<size_t>(cfg_.d_model)},
                   num::Init::kZeros);
    for (int i = 0; i < cfg_.blocks; ++i) {
      blocks_.push_back(std::make_unique<nn::ConformerBlock<T>>(
          params_, StrCat("block", i), cfg_.d_model, cfg_.heads, cfg_.ff_dim,
          cfg_.conv_kernel));
      if (BlockIntegrates(i)) {
        std::string p = StrCat("block", i, ".embed");
        params_.Create(p + ".w",
                       {static_cast<size_t>(cfg_.d_model),
                        static_cast<size_t>(cfg_.embedding_dim)},
                       num::Init::kNormalScaled,
                       1.0 / std::sqrt(static_cast<double>(cfg_.embedding_dim)));
        params_.Create(p + ".scale", {1}, num::Init::kConst,
                       cfg_.freeze_weight_at_zero ? 0.0 : cfg_.weight_init);
        if (cfg_.freeze_weight_at_zero) {
          params_.SetTrainable(p + ".w", false);
          params_.SetTrainable(p + ".scale", false);
        }
      }
    }
    params_.CreateAffineWeight("output.w", cfg_.d_model, cfg_.num_classes);
    params_.Create("output.b", {static_cast<size_t>(cfg_.num_classes)},
                   num::Init::kZeros);
  }

  // embedding may be null only when the model has no integration parameters.
  num::Tensor<T> Forward(const Mat& feats,
                         const std::vector<float>* embedding) const {
    Require<ShapeError>(static_cast<int>(feats.cols) == cfg_.input_dim,
                        "utterance has ", feats.cols, " features, model expects ",
                        cfg_.input_dim);
    if (cfg_.embedding_dim > 0 && !cfg_.freeze_weight_at_zero)
      Require<UsageError>(embedding != nullptr,
                          "adapted model forward needs an embedding");
    num::Tensor<T> e;
    if (embedding != nullptr && cfg_.embedding_dim > 0 &&
        !cfg_.freeze_weight_at_zero) {
      Require<ShapeError>(static_cast<int>(embedding->size()) == cfg_.embedding_dim,
                          "embedding dim ", embedding->size(), ", model expects ",
                          cfg_.embedding_dim);
      std::vector<T> ev(embedding->begin(), embedding->end());
      e = num::Tensor<T>::FromVector(std::move(ev),
                                     {static_cast<size_t>(cfg_.embedding_dim)});
    }
    auto h = num::AddRowVec(num::MatMul(num::Tensor<T>::FromMat(feats),
                                        params_.Get("input.w").value),
                            params_.Get("input.b").value);
    h = num::Add(h, nn::PositionEncoding<T>(h.Rows(), cfg_.d_model));
    for (int i = 0; i < cfg_.blocks; ++i) {
      // A weight frozen at zero contributes exactly nothing, so the addition
      // is skipped outright and the block matches the unadapted one bit for
      // bit.
      if (e.Defined() && BlockIntegrates(i)) {
        std::string p = StrCat("block", i, ".embed");
        auto addition = num::ScaleT(num::MatVec(params_.Get(p + ".w").value, e),
                                    params_.Get(p + ".scale").value);
        h = blocks_[i]->Forward(h, &addition);
      } else {
        h = blocks_[i]->Forward(h);
      }
    }
    return num::AddRowVec(num::MatMul(h, params_.Get("output.w").value),
                          params_.Get("output.b").value);  // T x num_classes
  }

  // Mean over frames of the per-frame cross-entropy.
  num::Tensor<T> FrameCeLoss(const num::Tensor<T>& logits,
                             const std::vector<int>& labels) const {
    Require<ShapeError>(logits.Rows() == labels.size(),
                        "frame labels (", labels.size(),
                        ") must match logit rows (", logits.Rows(), ")");
    return num::Scale(num::Mean(num::PickRows(num::LogSoftmax(logits), labels)),
                      -1.0);
  }

  bool BlockIntegrates(int block_index) const {
    if (cfg_.embedding_dim <= 0) return false;
    return cfg_.site == IntegrationSite::kAllBlocks || block_index == 0;
  }

  num::ParamStore<T>& Params() { return params_; }
  const num::ParamStore<T>& Params() const { return params_; }
  const AmConfig& Config() const { return cfg_; }

 private:
  AmConfig cfg_;
  num::ParamStore<T> params_;
  std::vector<std::unique_ptr<nn::ConformerBlock<T>>> blocks_;
};

}  // namespace spkembed::adapt

#endif  // SPKEMBED_ADAPTATION_H_
