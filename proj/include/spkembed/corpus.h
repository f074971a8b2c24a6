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

#ifndef SPKEMBED_CORPUS_H_
#define SPKEMBED_CORPUS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spkembed/mat.h"

namespace spkembed::corpus {

// Synthetic multi-speaker corpus with known factor structure. Each frame is
//   speaker_basis * speaker_factor        (fixed per speaker)
// + channel_basis * channel_factor        (fixed per recording)
// + content                                (frame-varying, centered per
//                                           utterance so utterance means
//                                           isolate the speaker and channel
//                                           components)
// + gaussian noise * noise_scale.
//
// Content frames are drawn near one of kContentClasses prototype vectors in
// phone-like runs; each frame's class label is the nearest prototype and is
// the training target for the downstream frame classifier.

inline constexpr int kContentClasses = 32;
inline constexpr double kContentScale = 1.0;
inline constexpr double kContentJitterStd = 0.1;
inline constexpr int kContentRunMin = 3;  // frames per content run
inline constexpr int kContentRunMax = 10;

struct CorpusSpec {
  int num_speakers = 20;
  int recordings_per_speaker = 5;
  int utterances_per_recording = 10;
  int frames_min = 50;
  int frames_max = 150;
  int feature_dim = 40;
  int speaker_factor_dim = 8;
  int channel_factor_dim = 4;
  double noise_scale = 0.5;
  uint64_t seed = 7;

  // Throws ConfigError naming the offending field.
  void Validate() const;
  int TotalUtterances() const {
    return num_speakers * recordings_per_speaker * utterances_per_recording;
  }
};

struct Utterance {
  std::string utterance_id;
  std::string speaker_id;
  std::string recording_id;
  Mat features;                   // T x C
  std::vector<int> frame_labels;  // content class per frame, [0, kContentClasses)
};

struct Corpus {
  CorpusSpec spec;
  std::vector<Utterance> utterances;  // ordered by utterance_id

  // Ground-truth generative factors, kept for analysis and tests.
  Mat speaker_basis;                  // C x speaker_factor_dim, orthonormal cols
  Mat channel_basis;                  // C x channel_factor_dim, orthonormal cols
  Mat speaker_factors;                // num_speakers x speaker_factor_dim
  std::map<std::string, std::vector<float>> channel_factors;  // by recording_id
  Mat content_prototypes;             // kContentClasses x C

  std::vector<std::string> SpeakerIds() const;
  std::vector<std::string> RecordingIds() const;
  int SpeakerIndex(const std::string& speaker_id) const;
};

Corpus GenerateCorpus(const CorpusSpec& spec);

// Train / cross-validation split, stratified per speaker so the speaker set
// is closed. Holds indices into Corpus::utterances.
struct CorpusSplit {
  std::vector<int> train;
  std::vector<int> cross_validation;
};

CorpusSplit SplitCorpus(const Corpus& corpus, double cv_fraction, uint64_t seed);

// On-disk layout under dir:
//   manifest.tsv       utterance_id, speaker_id, recording_id, path, T
//   features/<id>.sef  SEF1 feature matrix
//   labels.tsv         utterance_id, space-separated frame labels
//   groundtruth.json   spec echo plus generative factors
//   corpus.hash        hex content hash over the files above
void SaveCorpus(const Corpus& corpus, const std::string& dir);
Corpus LoadCorpus(const std::string& dir);

// Content hash over the persisted corpus files (manifest order).
uint64_t HashCorpusDir(const std::string& dir);

}  // namespace spkembed::corpus

#endif  // SPKEMBED_CORPUS_H_
