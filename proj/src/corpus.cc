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

#include "spkembed/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "spkembed/errors.h"
#include "spkembed/hash.h"
#include "spkembed/rng.h"

namespace spkembed::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string PadId(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, i);
  return std::string(buf);
}

// Orthonormal C x k basis: gaussian columns, modified Gram-Schmidt in double.
std::vector<std::vector<double>> OrthonormalBasis(int dim, int k, Rng& rng) {
  std::vector<std::vector<double>> cols(k, std::vector<double>(dim));
  for (auto& col : cols)
    for (auto& v : col) v = rng.Gaussian();
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < i; ++j) {
      double d = 0;
      for (int r = 0; r < dim; ++r) d += cols[i][r] * cols[j][r];
      for (int r = 0; r < dim; ++r) cols[i][r] -= d * cols[j][r];
    }
    double norm = 0;
    for (int r = 0; r < dim; ++r) norm += cols[i][r] * cols[i][r];
    norm = std::sqrt(norm);
    Require<ConfigError>(norm > 1e-8, "degenerate basis draw; raise feature_dim");
    for (int r = 0; r < dim; ++r) cols[i][r] /= norm;
  }
  return cols;
}

Mat ColsToMat(const std::vector<std::vector<double>>& cols, int dim) {
  Mat m(static_cast<size_t>(dim), cols.size());
  for (size_t c = 0; c < cols.size(); ++c)
    for (int r = 0; r < dim; ++r) m.At(r, c) = static_cast<float>(cols[c][r]);
  return m;
}

std::vector<std::string> SplitFields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

json MatToJson(const Mat& m) {
  json rows = json::array();
  for (size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (size_t c = 0; c < m.cols; ++c) row.push_back(m.At(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat MatFromJson(const json& rows) {
  if (rows.empty()) return Mat();
  Mat m(rows.size(), rows[0].size());
  for (size_t r = 0; r < m.rows; ++r)
    for (size_t c = 0; c < m.cols; ++c) m.At(r, c) = rows[r][c].get<float>();
  return m;
}

}  // namespace

void CorpusSpec::Validate() const {
  auto positive = [](int v, const char* field) {
    Require<ConfigError>(v > 0, "corpus.", field, " must be positive, got ", v);
  };
  positive(num_speakers, "num_speakers");
  positive(recordings_per_speaker, "recordings_per_speaker");
  positive(utterances_per_recording, "utterances_per_recording");
  positive(frames_min, "frames_min");
  positive(frames_max, "frames_max");
  positive(feature_dim, "feature_dim");
  Require<ConfigError>(frames_min <= frames_max,
                       "corpus.frames_min must not exceed corpus.frames_max");
  Require<ConfigError>(speaker_factor_dim > 0,
                       "corpus.speaker_factor_dim must be positive, got ",
                       speaker_factor_dim);
  Require<ConfigError>(channel_factor_dim >= 0,
                       "corpus.channel_factor_dim must be non-negative, got ",
                       channel_factor_dim);
  Require<ConfigError>(speaker_factor_dim <= feature_dim,
                       "corpus.speaker_factor_dim must not exceed feature_dim");
  Require<ConfigError>(channel_factor_dim <= feature_dim,
                       "corpus.channel_factor_dim must not exceed feature_dim");
  Require<ConfigError>(noise_scale >= 0.0,
                       "corpus.noise_scale must be non-negative, got ",
                       noise_scale);
}

std::vector<std::string> Corpus::SpeakerIds() const {
  std::set<std::string> ids;
  for (const auto& u : utterances) ids.insert(u.speaker_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> Corpus::RecordingIds() const {
  std::set<std::string> ids;
  for (const auto& u : utterances) ids.insert(u.recording_id);
  return {ids.begin(), ids.end()};
}

int Corpus::SpeakerIndex(const std::string& speaker_id) const {
  // Speaker ids are zero-padded integers, e.g. "s007".
  return std::stoi(speaker_id.substr(1));
}

Corpus GenerateCorpus(const CorpusSpec& spec) {
  spec.Validate();
  Corpus corpus;
  corpus.spec = spec;
  const int C = spec.feature_dim;

  {
    Rng rng(FoldSeed(spec.seed, "speaker_basis"));
    corpus.speaker_basis = ColsToMat(
        OrthonormalBasis(C, spec.speaker_factor_dim, rng), C);
  }
  if (spec.channel_factor_dim > 0) {
    Rng rng(FoldSeed(spec.seed, "channel_basis"));
    corpus.channel_basis = ColsToMat(
        OrthonormalBasis(C, spec.channel_factor_dim, rng), C);
  } else {
    corpus.channel_basis = Mat(static_cast<size_t>(C), 0);
  }
  {
    Rng rng(FoldSeed(spec.seed, "content_prototypes"));
    corpus.content_prototypes = Mat(kContentClasses, C);
    for (auto& v : corpus.content_prototypes.data)
      v = static_cast<float>(rng.Gaussian() * kContentScale);
  }

  corpus.speaker_factors = Mat(spec.num_speakers, spec.speaker_factor_dim);
  for (int s = 0; s < spec.num_speakers; ++s) {
    Rng rng(FoldSeed(spec.seed, "speaker_factor", static_cast<uint64_t>(s)));
    for (int k = 0; k < spec.speaker_factor_dim; ++k)
      corpus.speaker_factors.At(s, k) = static_cast<float>(rng.Gaussian());
  }

  for (int s = 0; s < spec.num_speakers; ++s) {
    std::string speaker_id = PadId("s", s, 3);
    // Speaker component in feature space, fixed for all of this speaker.
    std::vector<double> spk_comp(C, 0.0);
    for (int k = 0; k < spec.speaker_factor_dim; ++k) {
      double f = corpus.speaker_factors.At(s, k);
      for (int r = 0; r < C; ++r)
        spk_comp[r] += corpus.speaker_basis.At(r, k) * f;
    }
    for (int rec = 0; rec < spec.recordings_per_speaker; ++rec) {
      std::string recording_id = speaker_id + "_" + PadId("r", rec, 2);
      std::vector<float> chan_factor(spec.channel_factor_dim, 0.0f);
      std::vector<double> chan_comp(C, 0.0);
      if (spec.channel_factor_dim > 0) {
        Rng rng(FoldSeed(spec.seed, "channel_factor." + recording_id));
        for (auto& v : chan_factor) v = static_cast<float>(rng.Gaussian());
        for (int k = 0; k < spec.channel_factor_dim; ++k)
          for (int r = 0; r < C; ++r)
            chan_comp[r] += corpus.channel_basis.At(r, k) * chan_factor[k];
      }
      corpus.channel_factors[recording_id] = chan_factor;

      for (int utt = 0; utt < spec.utterances_per_recording; ++utt) {
        Utterance u;
        u.speaker_id = speaker_id;
        u.recording_id = recording_id;
        u.utterance_id = recording_id + "_" + PadId("u", utt, 2);
        Rng rng(FoldSeed(spec.seed, "utterance." + u.utterance_id));

        int span = spec.frames_max - spec.frames_min + 1;
        int T = spec.frames_min + static_cast<int>(rng.Below(span));

        // Phone-like runs of content classes.
        std::vector<int> classes(T);
        int t = 0;
        while (t < T) {
          int cls = static_cast<int>(rng.Below(kContentClasses));
          int run = kContentRunMin +
                    static_cast<int>(rng.Below(kContentRunMax - kContentRunMin + 1));
          for (int i = 0; i < run && t < T; ++i) classes[t++] = cls;
        }

        std::vector<double> content(static_cast<size_t>(T) * C);
        for (int tt = 0; tt < T; ++tt)
          for (int c = 0; c < C; ++c)
            content[tt * C + c] =
                corpus.content_prototypes.At(classes[tt], c) +
                rng.Gaussian() * kContentJitterStd;

        // Label = nearest prototype of the raw content frame. Centering the
        // content afterwards shifts frame and prototypes alike, so the
        // assignment is unaffected.
        u.frame_labels.resize(T);
        for (int tt = 0; tt < T; ++tt) {
          int best = 0;
          double best_d = 0;
          for (int k = 0; k < kContentClasses; ++k) {
            double d = 0;
            for (int c = 0; c < C; ++c) {
              double diff =
                  content[tt * C + c] - corpus.content_prototypes.At(k, c);
              d += diff * diff;
            }
            if (k == 0 || d < best_d) {
              best = k;
              best_d = d;
            }
          }
          u.frame_labels[tt] = best;
        }

        // Center content per utterance: utterance-mean frames then carry
        // only the speaker and channel components (plus noise).
        for (int c = 0; c < C; ++c) {
          double mean = 0;
          for (int tt = 0; tt < T; ++tt) mean += content[tt * C + c];
          mean /= T;
          for (int tt = 0; tt < T; ++tt) content[tt * C + c] -= mean;
        }

        u.features = Mat(T, C);
        for (int tt = 0; tt < T; ++tt)
          for (int c = 0; c < C; ++c)
            u.features.At(tt, c) = static_cast<float>(
                spk_comp[c] + chan_comp[c] + content[tt * C + c] +
                rng.Gaussian() * spec.noise_scale);
        corpus.utterances.push_back(std::move(u));
      }
    }
  }
  return corpus;
}

CorpusSplit SplitCorpus(const Corpus& corpus, double cv_fraction, uint64_t seed) {
  Require<ConfigError>(cv_fraction > 0.0 && cv_fraction < 1.0,
                       "split.cv_fraction must be in (0, 1), got ", cv_fraction);
  std::map<std::string, std::vector<int>> by_speaker;
  for (size_t i = 0; i < corpus.utterances.size(); ++i)
    by_speaker[corpus.utterances[i].speaker_id].push_back(static_cast<int>(i));

  CorpusSplit split;
  for (auto& [speaker_id, indices] : by_speaker) {
    Require<UsageError>(indices.size() >= 2, "cannot split: speaker ",
                        speaker_id, " has only ", indices.size(),
                        " utterance(s); at least 2 required");
    Rng rng(FoldSeed(seed, "split." + speaker_id));
    rng.Shuffle(indices);
    size_t n = indices.size();
    size_t n_cv = static_cast<size_t>(std::lround(cv_fraction * n));
    n_cv = std::min(std::max<size_t>(n_cv, 1), n - 1);
    for (size_t i = 0; i < n; ++i)
      (i < n_cv ? split.cross_validation : split.train).push_back(indices[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.cross_validation.begin(), split.cross_validation.end());
  return split;
}

void SaveCorpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");

  std::ofstream manifest(fs::path(dir) / "manifest.tsv");
  std::ofstream labels(fs::path(dir) / "labels.tsv");
  Require<IoError>(manifest.good() && labels.good(),
                   "cannot write corpus files under ", dir);
  for (const auto& u : corpus.utterances) {
    std::string rel = "features/" + u.utterance_id + ".sef";
    WriteSef((fs::path(dir) / rel).string(), u.features);
    manifest << u.utterance_id << '\t' << u.speaker_id << '\t' << u.recording_id
             << '\t' << rel << '\t' << u.features.rows << '\n';
    labels << u.utterance_id;
    for (int l : u.frame_labels) labels << ' ' << l;
    labels << '\n';
  }
  manifest.close();
  labels.close();

  json gt;
  gt["spec"] = {{"num_speakers", corpus.spec.num_speakers},
                {"recordings_per_speaker", corpus.spec.recordings_per_speaker},
                {"utterances_per_recording", corpus.spec.utterances_per_recording},
                {"frames_min", corpus.spec.frames_min},
                {"frames_max", corpus.spec.frames_max},
                {"feature_dim", corpus.spec.feature_dim},
                {"speaker_factor_dim", corpus.spec.speaker_factor_dim},
                {"channel_factor_dim", corpus.spec.channel_factor_dim},
                {"noise_scale", corpus.spec.noise_scale},
                {"seed", corpus.spec.seed}};
  gt["speaker_basis"] = MatToJson(corpus.speaker_basis);
  gt["channel_basis"] = MatToJson(corpus.channel_basis);
  gt["speaker_factors"] = MatToJson(corpus.speaker_factors);
  gt["content_prototypes"] = MatToJson(corpus.content_prototypes);
  json chan = json::object();
  for (const auto& [rec, f] : corpus.channel_factors) chan[rec] = f;
  gt["channel_factors"] = std::move(chan);
  std::ofstream gts(fs::path(dir) / "groundtruth.json");
  gts << gt.dump(2) << '\n';
  gts.close();

  std::ofstream hash(fs::path(dir) / "corpus.hash");
  hash << HashToHex(HashCorpusDir(dir)) << '\n';
}

Corpus LoadCorpus(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  Require<IoError>(manifest.good(), "cannot open corpus manifest under ", dir,
                   " (run the synth command first)");
  Corpus corpus;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto fields = SplitFields(line, '\t');
    Require<IoError>(fields.size() == 5, "malformed manifest line: ", line);
    Utterance u;
    u.utterance_id = fields[0];
    u.speaker_id = fields[1];
    u.recording_id = fields[2];
    u.features = ReadSef((fs::path(dir) / fields[3]).string());
    Require<IoError>(u.features.rows == std::stoul(fields[4]),
                     "manifest frame count mismatch for ", u.utterance_id);
    corpus.utterances.push_back(std::move(u));
  }

  std::ifstream labels(fs::path(dir) / "labels.tsv");
  Require<IoError>(labels.good(), "cannot open labels.tsv under ", dir);
  std::map<std::string, std::vector<int>> by_id;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    auto& vec = by_id[id];
    int v;
    while (ss >> v) vec.push_back(v);
  }
  for (auto& u : corpus.utterances) {
    auto it = by_id.find(u.utterance_id);
    Require<IoError>(it != by_id.end() && it->second.size() == u.features.rows,
                     "labels missing or mismatched for ", u.utterance_id);
    u.frame_labels = it->second;
  }

  std::ifstream gts(fs::path(dir) / "groundtruth.json");
  Require<IoError>(gts.good(), "cannot open groundtruth.json under ", dir);
  json gt = json::parse(gts);
  const json& s = gt.at("spec");
  corpus.spec.num_speakers = s.at("num_speakers").get<int>();
  corpus.spec.recordings_per_speaker = s.at("recordings_per_speaker").get<int>();
  corpus.spec.utterances_per_recording =
      s.at("utterances_per_recording").get<int>();
  corpus.spec.frames_min = s.at("frames_min").get<int>();
  corpus.spec.frames_max = s.at("frames_max").get<int>();
  corpus.spec.feature_dim = s.at("feature_dim").get<int>();
  corpus.spec.speaker_factor_dim = s.at("speaker_factor_dim").get<int>();
  corpus.spec.channel_factor_dim = s.at("channel_factor_dim").get<int>();
  corpus.spec.noise_scale = s.at("noise_scale").get<double>();
  corpus.spec.seed = s.at("seed").get<uint64_t>();
  corpus.speaker_basis = MatFromJson(gt.at("speaker_basis"));
  corpus.channel_basis = MatFromJson(gt.at("channel_basis"));
  corpus.speaker_factors = MatFromJson(gt.at("speaker_factors"));
  corpus.content_prototypes = MatFromJson(gt.at("content_prototypes"));
  for (const auto& [rec, f] : gt.at("channel_factors").items())
    corpus.channel_factors[rec] = f.get<std::vector<float>>();
  return corpus;
}

uint64_t HashCorpusDir(const std::string& dir) {
  std::vector<std::string> files;
  files.push_back((fs::path(dir) / "manifest.tsv").string());
  files.push_back((fs::path(dir) / "labels.tsv").string());
  files.push_back((fs::path(dir) / "groundtruth.json").string());
  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  Require<IoError>(manifest.good(), "cannot open corpus manifest under ", dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto fields = SplitFields(line, '\t');
    Require<IoError>(fields.size() == 5, "malformed manifest line: ", line);
    files.push_back((fs::path(dir) / fields[3]).string());
  }
  return HashFiles(files);
}

}  // namespace spkembed::corpus
