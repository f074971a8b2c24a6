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

#ifndef SPKEMBED_TRAINING_H_
#define SPKEMBED_TRAINING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "spkembed/adaptation.h"
#include "spkembed/corpus.h"
#include "spkembed/extractor.h"
#include "spkembed/schedule.h"

namespace spkembed::train {

// Training compute type; gradient checks instantiate the model templates
// with double instead.
using Real = float;

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double train_ce = 0;
  double train_rec = 0;  // 0 when no reconstruction term
  double lr_first = 0;
  double lr_last = 0;
  double cv_accuracy = 0;
  double cv_ce = 0;
};

struct TrainReport {
  std::string kind;  // "extractor" or "am"
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochRecord> epochs;
  std::vector<double> lr_trace;  // one entry per optimizer step
  double final_cv_accuracy = 0;
  double final_cv_ce = 0;
  double wall_seconds = 0;  // written to a separate timing file, see below
};

struct TrainOptions {
  OclrSchedule schedule;  // steps_per_epoch is derived from the train set
  int batch_size = 8;
  uint64_t seed = 1;
  double lambda = 0.0;         // reconstruction loss scale (extractor)
  double train_fraction = 1.0; // fraction of train utterances used (am)
  std::string run_dir;         // when set, per-epoch checkpoints land here
  std::string config_hash;
  bool quiet = true;           // per-epoch progress lines on stderr when false
};

// Cross-entropy + lambda * reconstruction under Adam and the one-cycle
// schedule. Per-utterance losses are averaged over each batch via gradient
// accumulation, which keeps variable-length pooling exact. Deterministic
// given (options.seed, model init); a non-finite loss aborts with a
// DivergenceError naming the epoch, step and utterance.
TrainReport TrainExtractor(nn::SpeakerExtractor<Real>& model,
                           const corpus::Corpus& corpus,
                           const corpus::CorpusSplit& split,
                           const TrainOptions& options);

struct SpeakerIdEval {
  double accuracy = 0;
  double mean_ce = 0;
};

// Closed-set speaker identification: fraction of CV utterances whose argmax
// logit (lowest index on ties) is the true speaker.
SpeakerIdEval EvalSpeakerId(const nn::SpeakerExtractor<Real>& model,
                            const corpus::Corpus& corpus,
                            const std::vector<int>& cv_indices);

// Frame-level cross-entropy training of the adapted acoustic model.
// source may be null for the no-embedding baseline.
TrainReport TrainAdaptedAm(adapt::AdaptedAm<Real>& model,
                           const corpus::Corpus& corpus,
                           const corpus::CorpusSplit& split,
                           const adapt::EmbeddingSource* source,
                           const TrainOptions& options);

struct FrameEval {
  double frame_accuracy = 0;
  double frame_ce = 0;  // frame-weighted mean
};

FrameEval EvalFrames(const adapt::AdaptedAm<Real>& model,
                     const corpus::Corpus& corpus,
                     const std::vector<int>& cv_indices,
                     const adapt::EmbeddingSource* source);

// report.txt (one record per epoch) and report.json hold only deterministic
// values; wall-clock goes to timing.txt so the other two are byte-stable
// across identical runs.
void WriteTrainReport(const std::string& run_dir, const TrainReport& report);
TrainReport LoadTrainReport(const std::string& run_dir);

}  // namespace spkembed::train

#endif  // SPKEMBED_TRAINING_H_
