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

#include "spkembed/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "spkembed/checkpoint.h"
#include "spkembed/errors.h"
#include "spkembed/optim.h"

namespace spkembed::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double Now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int SpeakerIndexChecked(const corpus::Corpus& corpus,
                        const corpus::Utterance& u, int num_speakers) {
  int idx = corpus.SpeakerIndex(u.speaker_id);
  Require<ConfigError>(idx >= 0 && idx < num_speakers, "speaker ", u.speaker_id,
                       " outside the model's ", num_speakers, " classes");
  return idx;
}

// Lowest index wins ties, so a constant-logit model is still deterministic.
template <typename T>
size_t ArgMax(const std::vector<T>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

void MaybeCheckpoint(const std::string& run_dir, int epoch,
                     const num::ParamStore<Real>& params) {
  if (run_dir.empty()) return;
  fs::create_directories(run_dir);
  num::SaveCheckpoint(params, (fs::path(run_dir) / StrCat(epoch, ".ckpt")).string());
}

std::vector<int> EpochOrder(const std::vector<int>& base, uint64_t seed, int epoch) {
  std::vector<int> order = base;
  Rng rng(FoldSeed(seed, "shuffle", static_cast<uint64_t>(epoch)));
  rng.Shuffle(order);
  return order;
}

void Progress(const TrainOptions& options, const char* kind,
              const EpochRecord& rec) {
  if (options.quiet) return;
  std::fprintf(stderr,
               "[%s seed=%llu] epoch %d loss=%.4f cv_acc=%.4f cv_ce=%.4f lr=%.2e\n",
               kind, static_cast<unsigned long long>(options.seed), rec.epoch,
               rec.train_loss, rec.cv_accuracy, rec.cv_ce, rec.lr_last);
}

std::string FmtG(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

}  // namespace

TrainReport TrainExtractor(nn::SpeakerExtractor<Real>& model,
                           const corpus::Corpus& corpus,
                           const corpus::CorpusSplit& split,
                           const TrainOptions& options) {
  Require<UsageError>(!split.train.empty(), "empty training split");
  Require<UsageError>(options.lambda >= 0.0, "lambda must be non-negative, got ",
                      options.lambda);
  const double start_time = Now();
  auto& params = model.Params();
  const bool use_recon =
      model.Config().reconstruction_branch && options.lambda > 0.0;
  if (model.Config().reconstruction_branch) {
    // With lambda == 0 the branch is inert: excluded from the graph and from
    // the optimizer, so runs match branch-absent training bit for bit.
    params.SetTrainable("recon.w", use_recon);
    params.SetTrainable("recon.b", use_recon);
  }

  OclrSchedule schedule = options.schedule;
  schedule.steps_per_epoch = static_cast<int>(
      (split.train.size() + options.batch_size - 1) / options.batch_size);
  schedule.Validate();

  TrainReport report;
  report.kind = "extractor";
  report.seed = options.seed;
  report.config_hash = options.config_hash;

  int global_step = 0;
  for (int epoch = 1; epoch <= schedule.TotalEpochs(); ++epoch) {
    std::vector<int> order = EpochOrder(split.train, options.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_first = schedule.LrAt(global_step);
    double loss_sum = 0, ce_sum = 0, rec_sum = 0;
    for (size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const size_t batch_n =
          std::min<size_t>(options.batch_size, order.size() - begin);
      params.ZeroGrad();
      const double lr = schedule.LrAt(global_step);
      for (size_t i = 0; i < batch_n; ++i) {
        const auto& u = corpus.utterances[order[begin + i]];
        const int speaker =
            SpeakerIndexChecked(corpus, u, model.Config().num_speakers);
        auto fwd = model.Forward(u.features);
        auto ce = model.CeLoss(fwd.logits, speaker);
        auto total = ce;
        if (use_recon) {
          Rng dropout_rng(FoldSeed(options.seed, "dropout." + u.utterance_id,
                                   static_cast<uint64_t>(epoch)));
          auto recon = model.ReconstructionLoss(fwd.frame_repr, u.features,
                                                /*training=*/true, &dropout_rng);
          rec_sum += recon.Item();
          total = num::Add(ce, num::Scale(recon, options.lambda));
        }
        const double loss_v = total.Item();
        Require<DivergenceError>(
            std::isfinite(loss_v), "training diverged: non-finite loss at epoch ",
            epoch, ", step ", global_step, ", utterance ", u.utterance_id);
        loss_sum += loss_v;
        ce_sum += ce.Item();
        num::Scale(total, 1.0 / static_cast<double>(batch_n)).Backward();
      }
      num::AdamStep(params, lr);
      report.lr_trace.push_back(lr);
      rec.lr_last = lr;
      ++global_step;
    }
    rec.train_loss = loss_sum / order.size();
    rec.train_ce = ce_sum / order.size();
    rec.train_rec = use_recon ? rec_sum / order.size() : 0.0;
    auto eval = EvalSpeakerId(model, corpus, split.cross_validation);
    rec.cv_accuracy = eval.accuracy;
    rec.cv_ce = eval.mean_ce;
    report.epochs.push_back(rec);
    Progress(options, "extractor", rec);
    MaybeCheckpoint(options.run_dir, epoch, params);
  }
  report.final_cv_accuracy = report.epochs.back().cv_accuracy;
  report.final_cv_ce = report.epochs.back().cv_ce;
  report.wall_seconds = Now() - start_time;
  if (!options.run_dir.empty()) {
    num::SaveCheckpoint(params, (fs::path(options.run_dir) / "final.ckpt").string());
    WriteTrainReport(options.run_dir, report);
  }
  return report;
}

SpeakerIdEval EvalSpeakerId(const nn::SpeakerExtractor<Real>& model,
                            const corpus::Corpus& corpus,
                            const std::vector<int>& cv_indices) {
  Require<UsageError>(!cv_indices.empty(), "empty cross-validation set");
  size_t correct = 0;
  double ce_sum = 0;
  for (int idx : cv_indices) {
    const auto& u = corpus.utterances[idx];
    const int speaker =
        SpeakerIndexChecked(corpus, u, model.Config().num_speakers);
    auto fwd = model.Forward(u.features);
    if (ArgMax(fwd.logits.Value()) == static_cast<size_t>(speaker)) ++correct;
    ce_sum += model.CeLoss(fwd.logits, speaker).Item();
  }
  return {static_cast<double>(correct) / cv_indices.size(),
          ce_sum / cv_indices.size()};
}

TrainReport TrainAdaptedAm(adapt::AdaptedAm<Real>& model,
                           const corpus::Corpus& corpus,
                           const corpus::CorpusSplit& split,
                           const adapt::EmbeddingSource* source,
                           const TrainOptions& options) {
  Require<UsageError>(!split.train.empty(), "empty training split");
  Require<UsageError>(options.train_fraction > 0.0 && options.train_fraction <= 1.0,
                      "train_fraction must be in (0, 1], got ",
                      options.train_fraction);
  const double start_time = Now();
  auto& params = model.Params();

  std::vector<int> train_set = split.train;
  if (options.train_fraction < 1.0) {
    Rng rng(FoldSeed(options.seed, "am_subset"));
    rng.Shuffle(train_set);
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::ceil(options.train_fraction * train_set.size())));
    train_set.resize(keep);
    std::sort(train_set.begin(), train_set.end());
  }

  OclrSchedule schedule = options.schedule;
  schedule.steps_per_epoch = static_cast<int>(
      (train_set.size() + options.batch_size - 1) / options.batch_size);
  schedule.Validate();

  TrainReport report;
  report.kind = "am";
  report.seed = options.seed;
  report.config_hash = options.config_hash;

  auto lookup = [&](const corpus::Utterance& u) -> const std::vector<float>* {
    if (source == nullptr || source->kind == adapt::SourceKind::kNone)
      return nullptr;
    return &source->Lookup(u.recording_id);
  };

  int global_step = 0;
  for (int epoch = 1; epoch <= schedule.TotalEpochs(); ++epoch) {
    std::vector<int> order = EpochOrder(train_set, options.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_first = schedule.LrAt(global_step);
    double loss_sum = 0;
    for (size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const size_t batch_n =
          std::min<size_t>(options.batch_size, order.size() - begin);
      params.ZeroGrad();
      const double lr = schedule.LrAt(global_step);
      for (size_t i = 0; i < batch_n; ++i) {
        const auto& u = corpus.utterances[order[begin + i]];
        auto logits = model.Forward(u.features, lookup(u));
        auto loss = model.FrameCeLoss(logits, u.frame_labels);
        const double loss_v = loss.Item();
        Require<DivergenceError>(
            std::isfinite(loss_v), "training diverged: non-finite loss at epoch ",
            epoch, ", step ", global_step, ", utterance ", u.utterance_id);
        loss_sum += loss_v;
        num::Scale(loss, 1.0 / static_cast<double>(batch_n)).Backward();
      }
      num::AdamStep(params, lr);
      report.lr_trace.push_back(lr);
      rec.lr_last = lr;
      ++global_step;
    }
    rec.train_loss = loss_sum / order.size();
    rec.train_ce = rec.train_loss;
    auto eval = EvalFrames(model, corpus, split.cross_validation, source);
    rec.cv_accuracy = eval.frame_accuracy;
    rec.cv_ce = eval.frame_ce;
    report.epochs.push_back(rec);
    Progress(options, "am", rec);
    MaybeCheckpoint(options.run_dir, epoch, params);
  }
  report.final_cv_accuracy = report.epochs.back().cv_accuracy;
  report.final_cv_ce = report.epochs.back().cv_ce;
  report.wall_seconds = Now() - start_time;
  if (!options.run_dir.empty()) {
    num::SaveCheckpoint(params, (fs::path(options.run_dir) / "final.ckpt").string());
    WriteTrainReport(options.run_dir, report);
  }
  return report;
}

FrameEval EvalFrames(const adapt::AdaptedAm<Real>& model,
                     const corpus::Corpus& corpus,
                     const std::vector<int>& cv_indices,
                     const adapt::EmbeddingSource* source) {
  Require<UsageError>(!cv_indices.empty(), "empty cross-validation set");
  size_t frames = 0, correct = 0;
  double ce_sum = 0;
  for (int idx : cv_indices) {
    const auto& u = corpus.utterances[idx];
    const std::vector<float>* e = nullptr;
    if (source != nullptr && source->kind != adapt::SourceKind::kNone)
      e = &source->Lookup(u.recording_id);
    auto logits = model.Forward(u.features, e);
    const size_t t = logits.Rows(), k = logits.Cols();
    for (size_t r = 0; r < t; ++r) {
      const float* row = logits.Value().data() + r * k;
      size_t best = 0;
      for (size_t c = 1; c < k; ++c)
        if (row[c] > row[best]) best = c;
      if (best == static_cast<size_t>(u.frame_labels[r])) ++correct;
    }
    ce_sum += model.FrameCeLoss(logits, u.frame_labels).Item() * t;
    frames += t;
  }
  return {static_cast<double>(correct) / frames, ce_sum / frames};
}

void WriteTrainReport(const std::string& run_dir, const TrainReport& report) {
  fs::create_directories(run_dir);
  {
    std::ofstream txt(fs::path(run_dir) / "report.txt");
    Require<IoError>(txt.good(), "cannot write report.txt under ", run_dir);
    txt << "# kind=" << report.kind << " seed=" << report.seed
        << " config_hash=" << report.config_hash << '\n';
    txt << "# epoch train_loss train_ce train_rec lr_first lr_last"
           " cv_accuracy cv_ce\n";
    for (const auto& e : report.epochs)
      txt << e.epoch << ' ' << FmtG(e.train_loss) << ' ' << FmtG(e.train_ce)
          << ' ' << FmtG(e.train_rec) << ' ' << FmtG(e.lr_first) << ' '
          << FmtG(e.lr_last) << ' ' << FmtG(e.cv_accuracy) << ' '
          << FmtG(e.cv_ce) << '\n';
    txt << "# final cv_accuracy=" << FmtG(report.final_cv_accuracy)
        << " cv_ce=" << FmtG(report.final_cv_ce) << '\n';
  }
  {
    json j;
    j["kind"] = report.kind;
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    j["final_cv_accuracy"] = report.final_cv_accuracy;
    j["final_cv_ce"] = report.final_cv_ce;
    json epochs = json::array();
    for (const auto& e : report.epochs)
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_ce", e.train_ce},
                        {"train_rec", e.train_rec},
                        {"lr_first", e.lr_first},
                        {"lr_last", e.lr_last},
                        {"cv_accuracy", e.cv_accuracy},
                        {"cv_ce", e.cv_ce}});
    j["epochs"] = std::move(epochs);
    std::ofstream js(fs::path(run_dir) / "report.json");
    js << j.dump(2) << '\n';
  }
  {
    std::ofstream timing(fs::path(run_dir) / "timing.txt");
    timing << "wall_seconds " << report.wall_seconds << '\n';
  }
}

TrainReport LoadTrainReport(const std::string& run_dir) {
  std::ifstream js(fs::path(run_dir) / "report.json");
  Require<IoError>(js.good(), "no report.json under ", run_dir,
                   " (run the matching train command first)");
  json j = json::parse(js);
  TrainReport report;
  report.kind = j.at("kind").get<std::string>();
  report.seed = j.at("seed").get<uint64_t>();
  report.config_hash = j.at("config_hash").get<std::string>();
  report.final_cv_accuracy = j.at("final_cv_accuracy").get<double>();
  report.final_cv_ce = j.at("final_cv_ce").get<double>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord rec;
    rec.epoch = e.at("epoch").get<int>();
    rec.train_loss = e.at("train_loss").get<double>();
    rec.train_ce = e.at("train_ce").get<double>();
    rec.train_rec = e.at("train_rec").get<double>();
    rec.lr_first = e.at("lr_first").get<double>();
    rec.lr_last = e.at("lr_last").get<double>();
    rec.cv_accuracy = e.at("cv_accuracy").get<double>();
    rec.cv_ce = e.at("cv_ce").get<double>();
    report.epochs.push_back(rec);
  }
  return report;
}

}  // namespace spkembed::train
