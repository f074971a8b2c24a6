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

#ifndef SPKEMBED_POSTPROC_H_
#define SPKEMBED_POSTPROC_H_

#include <functional>
#include <string>
#include <vector>

#include "spkembed/corpus.h"
#include "spkembed/mat.h"

namespace spkembed::post {

enum class Level { kUtterance, kRecording, kSpeaker };

std::string LevelName(Level level);
Level ParseLevel(const std::string& s);

// A fixed-size embedding with its provenance: the level it lives at and the
// post-processing operations applied so far (append-only, duplicate-free).
struct Embedding {
  std::string id;  // utterance, recording or speaker id depending on level
  std::string speaker_id;
  std::string recording_id;  // empty at speaker level
  Level level = Level::kUtterance;
  std::vector<float> vec;
  std::vector<std::string> applied_ops;
};

using EmbeddingSet = std::vector<Embedding>;

// Arithmetic mean per recording (utterance -> recording) or per speaker
// (recording -> speaker). Mixed input levels are a usage error.
EmbeddingSet AverageByLevel(const EmbeddingSet& in, Level target);

struct CenterResult {
  EmbeddingSet set;
  std::vector<float> mean;  // the mean that was subtracted; persist for held-out data
};

// Subtract the mean of the provided set; the returned mean is the artifact
// to apply to held-out embeddings.
CenterResult SubtractGlobalMean(const EmbeddingSet& in);

// Apply a previously fitted mean.
EmbeddingSet SubtractMean(const EmbeddingSet& in, const std::vector<float>& mean);

struct LdaTransform {
  Mat projection;           // D x D', generalized eigenvectors, eigenvalue-descending
  std::vector<double> eigenvalues;
  int num_classes = 0;
  std::vector<float> fit_mean;  // global mean of the fit data
};

// Fisher LDA via the generalized eigenproblem on (between, within) scatter;
// within-class scatter is ridge-regularized with gamma_scale*trace(Sw)/D.
LdaTransform FitLda(const EmbeddingSet& in, int out_dim,
                    double gamma_scale = 1e-6);

EmbeddingSet ApplyLda(const EmbeddingSet& in, const LdaTransform& lda);

// trace((W' Sw_reg W)^-1 (W' Sb W)) for an arbitrary projection; the quantity
// FitLda maximizes.
double FisherRatio(const EmbeddingSet& in, const Mat& projection,
                   double gamma_scale = 1e-6);

Embedding LengthNormalize(const Embedding& e);
EmbeddingSet LengthNormalize(const EmbeddingSet& in);

// extract -> average over recordings -> subtract global mean. No LDA and no
// length normalization in this default chain.
struct PipelineResult {
  EmbeddingSet recordings;
  std::vector<float> global_mean;
};
using EmbedFn = std::function<std::vector<float>(const corpus::Utterance&)>;
PipelineResult ImprovedPipeline(const corpus::Corpus& corpus, const EmbedFn& embed);
PipelineResult ImprovedPipeline(const std::vector<const corpus::Utterance*>& utts,
                                const EmbedFn& embed);

// On-disk set: <prefix>.tsv manifest (id, speaker, recording, level,
// applied_ops joined by '+' or '-') plus <prefix>.sef with one row per line.
void SaveEmbeddings(const std::string& prefix, const EmbeddingSet& set);
EmbeddingSet LoadEmbeddings(const std::string& prefix);

// Symmetric eigendecomposition by cyclic Jacobi; a = V diag(w) V', with
// eigenvalues descending. Exposed for reuse and testing. n x n row-major.
void SymmetricEig(const std::vector<double>& a, int n, std::vector<double>* w,
                  std::vector<double>* v);

}  // namespace spkembed::post

#endif  // SPKEMBED_POSTPROC_H_
