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

#ifndef SPKEMBED_CONFIG_H_
#define SPKEMBED_CONFIG_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "spkembed/corpus.h"
#include "spkembed/schedule.h"

namespace spkembed::cli {

struct ScheduleConfig {
  double lr_start = 2e-3;
  double lr_peak = 2e-2;
  double lr_end_phase2 = 2e-3;
  double lr_final = 1e-7;
  int epochs_phase1 = 16;
  int epochs_phase2 = 16;
  int epochs_phase3 = 10;
  std::string decay = "linear";

  train::OclrSchedule ToSchedule() const;
};

struct ReportRow {
  std::string label;
  std::string extractor_run;  // optional
  std::string am_run;         // optional
};

// One self-describing config file per experiment; command-line --set
// overrides individual keys. Unknown keys are rejected.
struct ExperimentConfig {
  std::string output_root = "out";

  corpus::CorpusSpec corpus_spec;
  std::string corpus_dir = "corpus";

  double cv_fraction = 0.1;
  uint64_t split_seed = 11;

  struct Extractor {
    std::string tag = "ext";
    std::string architecture = "tdnn";
    std::string preset = "desk";
    std::string pooling = "attentive_statistics";
    int attention_hidden = 128;
    bool reconstruction_branch = true;
    double reconstruction_lambda = 5.0;
    double reconstruction_dropout = 0.1;
    uint64_t seed = 1;
    int batch_size = 8;
    ScheduleConfig schedule{2e-3, 2e-2, 2e-3, 1e-7, 4, 3, 2, "linear"};
  } extractor;

  struct Extract {
    std::string run = "ext";
    std::string out = "emb_utt";
  } extract;

  struct Postproc {
    std::string in = "emb_utt";
    std::string out = "emb_rec";
    std::vector<std::string> chain{"average_recording", "mean_subtract"};
    int lda_dim = 0;  // 0: min(dim, speakers - 1)
  } postproc;

  struct Am {
    std::string tag = "am";
    int blocks = 4;
    int d_model = 64;
    int heads = 4;
    int ff_dim = 256;
    int conv_kernel = 7;
    std::string integration = "all_blocks";
    double weight_init = 0.5;
    bool freeze_weight_at_zero = false;
    std::string embedding_source = "none";  // none|file:<emb>|noise:<seed>|concat:<emb,...>
    int noise_dim = 64;
    uint64_t seed = 1;
    int batch_size = 8;
    double train_fraction = 1.0;
    ScheduleConfig schedule{2e-3, 2e-2, 2e-3, 1e-7, 2, 2, 1, "linear"};
  } am;

  struct Eval {
    std::string run = "ext";
  } eval;

  struct Report {
    std::vector<ReportRow> pooling;
    std::vector<ReportRow> postproc;
    std::vector<ReportRow> embedding;
  } report;

  nlohmann::json resolved;  // defaults + file + overrides
  std::string hash;         // content hash of the resolved config

  std::string CorpusDir() const;
  std::string RunDir(const std::string& tag) const;
  std::string EmbPrefix(const std::string& name) const;
  std::string ReportDir() const;
};

// Loads, applies dotted-path overrides ("extractor.pooling=average"),
// validates against the known-key schema, and resolves defaults.
ExperimentConfig LoadConfig(const std::string& path,
                            const std::vector<std::string>& overrides);

// The built-in defaults as a config file template.
nlohmann::json DefaultConfigJson();

}  // namespace spkembed::cli

#endif  // SPKEMBED_CONFIG_H_
