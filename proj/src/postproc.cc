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

#include "spkembed/postproc.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "spkembed/errors.h"

namespace spkembed::post {

namespace {

void CheckUniformDim(const EmbeddingSet& set) {
  Require<UsageError>(!set.empty(), "operation on an empty embedding set");
  for (const auto& e : set)
    Require<ShapeError>(e.vec.size() == set.front().vec.size(),
                        "mixed embedding dimensions: ", e.id, " has ",
                        e.vec.size(), ", expected ", set.front().vec.size());
}

void CheckUniformLevel(const EmbeddingSet& set, Level expected,
                       const char* op) {
  for (const auto& e : set)
    Require<UsageError>(e.level == expected, op, ": embedding ", e.id,
                        " is at level ", LevelName(e.level), ", expected ",
                        LevelName(expected));
}

void AppendOp(Embedding& e, const std::string& op) {
  for (const auto& prev : e.applied_ops)
    Require<UsageError>(prev != op, "operation ", op,
                        " already applied to embedding ", e.id);
  e.applied_ops.push_back(op);
}

// Scatter matrices of a labeled set, both scaled by 1/N. Within-class
// scatter comes back ridge-regularized: Sw + gamma_scale*trace(Sw)/D * I.
struct Scatter {
  int dim = 0;
  std::vector<double> within;   // D x D, regularized
  std::vector<double> between;  // D x D
  int num_classes = 0;
  std::vector<double> global_mean;
};

Scatter ComputeScatter(const EmbeddingSet& in, double gamma_scale,
                       bool require_two_per_class) {
  CheckUniformDim(in);
  const int d = static_cast<int>(in.front().vec.size());
  std::map<std::string, std::vector<const Embedding*>> by_class;
  for (const auto& e : in) by_class[e.speaker_id].push_back(&e);
  Require<UsageError>(by_class.size() >= 2,
                      "scatter needs at least 2 classes, got ", by_class.size());
  if (require_two_per_class)
    for (const auto& [cls, members] : by_class)
      Require<UsageError>(members.size() >= 2, "class ", cls, " has only ",
                          members.size(), " sample(s); at least 2 required");

  Scatter s;
  s.dim = d;
  s.num_classes = static_cast<int>(by_class.size());
  s.global_mean.assign(d, 0.0);
  const double n_total = static_cast<double>(in.size());
  for (const auto& e : in)
    for (int i = 0; i < d; ++i) s.global_mean[i] += e.vec[i] / n_total;

  s.within.assign(static_cast<size_t>(d) * d, 0.0);
  s.between.assign(static_cast<size_t>(d) * d, 0.0);
  std::vector<double> cmean(d);
  std::vector<double> diff(d);
  for (const auto& [cls, members] : by_class) {
    std::fill(cmean.begin(), cmean.end(), 0.0);
    for (const auto* e : members)
      for (int i = 0; i < d; ++i) cmean[i] += e->vec[i] / members.size();
    for (const auto* e : members) {
      for (int i = 0; i < d; ++i) diff[i] = e->vec[i] - cmean[i];
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          s.within[i * d + j] += diff[i] * diff[j] / n_total;
    }
    for (int i = 0; i < d; ++i) diff[i] = cmean[i] - s.global_mean[i];
    const double w = members.size() / n_total;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        s.between[i * d + j] += w * diff[i] * diff[j];
  }
  double trace = 0;
  for (int i = 0; i < d; ++i) trace += s.within[i * d + i];
  const double gamma = gamma_scale * trace / d;
  for (int i = 0; i < d; ++i) s.within[i * d + i] += gamma;
  return s;
}

// X = A^-1 B by Gaussian elimination with partial pivoting; A is n x n,
// B is n x m, both row-major and left unmodified.
std::vector<double> SolveLinear(std::vector<double> a, std::vector<double> b,
                                int n, int m) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(a[r * n + col]) > std::fabs(a[pivot * n + col])) pivot = r;
    Require<UsageError>(std::fabs(a[pivot * n + col]) > 1e-300,
                        "singular matrix in linear solve");
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
      for (int c = 0; c < m; ++c) std::swap(b[col * m + c], b[pivot * m + c]);
    }
    const double inv = 1.0 / a[col * n + col];
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col] * inv;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      for (int c = 0; c < m; ++c) b[r * m + c] -= f * b[col * m + c];
    }
  }
  for (int r = 0; r < n; ++r) {
    const double inv = 1.0 / a[r * n + r];
    for (int c = 0; c < m; ++c) b[r * m + c] *= inv;
  }
  return b;
}

}  // namespace

std::string LevelName(Level level) {
  switch (level) {
    case Level::kUtterance: return "utterance";
    case Level::kRecording: return "recording";
    case Level::kSpeaker: return "speaker";
  }
  return "?";
}

Level ParseLevel(const std::string& s) {
  if (s == "utterance") return Level::kUtterance;
  if (s == "recording") return Level::kRecording;
  if (s == "speaker") return Level::kSpeaker;
  throw ConfigError(StrCat("level must be utterance|recording|speaker, got ", s));
}

EmbeddingSet AverageByLevel(const EmbeddingSet& in, Level target) {
  CheckUniformDim(in);
  Level expected_input;
  if (target == Level::kRecording) {
    expected_input = Level::kUtterance;
  } else if (target == Level::kSpeaker) {
    expected_input = Level::kRecording;
  } else {
    throw UsageError("average target must be recording or speaker");
  }
  CheckUniformLevel(in, expected_input, "average_by_level");
  for (const auto& e : in)
    Require<UsageError>(e.applied_ops == in.front().applied_ops,
                        "average_by_level: inconsistent applied_ops on ", e.id);

  std::map<std::string, std::vector<const Embedding*>> groups;
  for (const auto& e : in) {
    const std::string& key =
        target == Level::kRecording ? e.recording_id : e.speaker_id;
    Require<UsageError>(!key.empty(), "embedding ", e.id, " lacks a ",
                        LevelName(target), " id");
    groups[key].push_back(&e);
  }

  EmbeddingSet out;
  out.reserve(groups.size());
  const size_t d = in.front().vec.size();
  for (const auto& [key, members] : groups) {
    Embedding avg;
    avg.id = key;
    avg.level = target;
    avg.speaker_id = members.front()->speaker_id;
    avg.recording_id = target == Level::kRecording ? key : "";
    avg.applied_ops = members.front()->applied_ops;
    for (const auto* e : members)
      Require<UsageError>(e->speaker_id == avg.speaker_id,
                          "recording ", key, " maps to multiple speakers");
    std::vector<double> acc(d, 0.0);
    for (const auto* e : members)
      for (size_t i = 0; i < d; ++i) acc[i] += e->vec[i];
    avg.vec.resize(d);
    for (size_t i = 0; i < d; ++i)
      avg.vec[i] = static_cast<float>(acc[i] / members.size());
    out.push_back(std::move(avg));
  }
  return out;
}

CenterResult SubtractGlobalMean(const EmbeddingSet& in) {
  CheckUniformDim(in);
  const size_t d = in.front().vec.size();
  std::vector<double> acc(d, 0.0);
  for (const auto& e : in)
    for (size_t i = 0; i < d; ++i) acc[i] += e.vec[i];
  std::vector<float> mean(d);
  for (size_t i = 0; i < d; ++i)
    mean[i] = static_cast<float>(acc[i] / in.size());
  return {SubtractMean(in, mean), std::move(mean)};
}

EmbeddingSet SubtractMean(const EmbeddingSet& in, const std::vector<float>& mean) {
  CheckUniformDim(in);
  Require<ShapeError>(mean.size() == in.front().vec.size(),
                      "mean dimension ", mean.size(), " does not match embeddings");
  EmbeddingSet out = in;
  for (auto& e : out) {
    for (size_t i = 0; i < mean.size(); ++i) e.vec[i] -= mean[i];
    AppendOp(e, "mean_subtract");
  }
  return out;
}

LdaTransform FitLda(const EmbeddingSet& in, int out_dim, double gamma_scale) {
  Scatter s = ComputeScatter(in, gamma_scale, /*require_two_per_class=*/true);
  const int d = s.dim;
  Require<ConfigError>(out_dim >= 1, "lda.dim must be positive, got ", out_dim);
  Require<ConfigError>(out_dim <= s.num_classes - 1, "lda.dim must be at most ",
                       s.num_classes - 1, " (classes - 1), got ", out_dim);
  Require<ConfigError>(out_dim <= d, "lda.dim must be at most the embedding dim ",
                       d, ", got ", out_dim);

  // Whiten within-class scatter, then eigendecompose the whitened
  // between-class scatter: columns of Sw^-1/2 P solve Sb w = mu Sw w.
  std::vector<double> evals, evecs;
  SymmetricEig(s.within, d, &evals, &evecs);
  std::vector<double> whiten(static_cast<size_t>(d) * d, 0.0);
  for (int k = 0; k < d; ++k) {
    Require<UsageError>(evals[k] > 0, "within-class scatter not positive definite");
    const double inv_sqrt = 1.0 / std::sqrt(evals[k]);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        whiten[i * d + j] += evecs[i * d + k] * inv_sqrt * evecs[j * d + k];
  }
  std::vector<double> tmp(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double w = whiten[i * d + k];
      if (w == 0.0) continue;
      for (int j = 0; j < d; ++j) tmp[i * d + j] += w * s.between[k * d + j];
    }
  std::vector<double> m(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double w = tmp[i * d + k];
      if (w == 0.0) continue;
      for (int j = 0; j < d; ++j) m[i * d + j] += w * whiten[k * d + j];
    }
  for (int i = 0; i < d; ++i)  // enforce symmetry against roundoff
    for (int j = i + 1; j < d; ++j)
      m[i * d + j] = m[j * d + i] = 0.5 * (m[i * d + j] + m[j * d + i]);

  std::vector<double> mu, p;
  SymmetricEig(m, d, &mu, &p);

  LdaTransform lda;
  lda.num_classes = s.num_classes;
  lda.eigenvalues.assign(mu.begin(), mu.begin() + out_dim);
  lda.fit_mean.resize(d);
  for (int i = 0; i < d; ++i)
    lda.fit_mean[i] = static_cast<float>(s.global_mean[i]);
  lda.projection = Mat(d, out_dim);
  for (int c = 0; c < out_dim; ++c)
    for (int i = 0; i < d; ++i) {
      double acc = 0;
      for (int k = 0; k < d; ++k) acc += whiten[i * d + k] * p[k * d + c];
      lda.projection.At(i, c) = static_cast<float>(acc);
    }
  return lda;
}

EmbeddingSet ApplyLda(const EmbeddingSet& in, const LdaTransform& lda) {
  CheckUniformDim(in);
  const size_t d = lda.projection.rows;
  const size_t dp = lda.projection.cols;
  Require<ShapeError>(in.front().vec.size() == d,
                      "lda transform expects dimension ", d, ", got ",
                      in.front().vec.size());
  EmbeddingSet out = in;
  for (auto& e : out) {
    std::vector<float> y(dp, 0.0f);
    for (size_t c = 0; c < dp; ++c) {
      double acc = 0;
      for (size_t i = 0; i < d; ++i)
        acc += (e.vec[i] - lda.fit_mean[i]) * lda.projection.At(i, c);
      y[c] = static_cast<float>(acc);
    }
    e.vec = std::move(y);
    AppendOp(e, "lda");
  }
  return out;
}

double FisherRatio(const EmbeddingSet& in, const Mat& projection,
                   double gamma_scale) {
  Scatter s = ComputeScatter(in, gamma_scale, /*require_two_per_class=*/false);
  const int d = s.dim;
  const int dp = static_cast<int>(projection.cols);
  Require<ShapeError>(static_cast<int>(projection.rows) == d,
                      "projection rows must equal embedding dim");
  // A = W' Sw W, B = W' Sb W, both dp x dp.
  auto project = [&](const std::vector<double>& sm) {
    std::vector<double> tmp(static_cast<size_t>(d) * dp, 0.0);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) {
        const double v = sm[i * d + k];
        if (v == 0.0) continue;
        for (int c = 0; c < dp; ++c) tmp[i * dp + c] += v * projection.At(k, c);
      }
    std::vector<double> out(static_cast<size_t>(dp) * dp, 0.0);
    for (int i = 0; i < d; ++i)
      for (int r = 0; r < dp; ++r) {
        const double v = projection.At(i, r);
        if (v == 0.0) continue;
        for (int c = 0; c < dp; ++c) out[r * dp + c] += v * tmp[i * dp + c];
      }
    return out;
  };
  std::vector<double> a = project(s.within);
  std::vector<double> b = project(s.between);
  std::vector<double> x = SolveLinear(std::move(a), std::move(b), dp, dp);
  double trace = 0;
  for (int i = 0; i < dp; ++i) trace += x[i * dp + i];
  return trace;
}

Embedding LengthNormalize(const Embedding& e) {
  double norm = 0;
  for (float v : e.vec) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  Require<UsageError>(norm >= 1e-12, "degenerate embedding ", e.id,
                      ": norm ", norm, " below 1e-12");
  Embedding out = e;
  for (auto& v : out.vec) v = static_cast<float>(v / norm);
  AppendOp(out, "length_norm");
  return out;
}

EmbeddingSet LengthNormalize(const EmbeddingSet& in) {
  EmbeddingSet out;
  out.reserve(in.size());
  for (const auto& e : in) out.push_back(LengthNormalize(e));
  return out;
}

PipelineResult ImprovedPipeline(const std::vector<const corpus::Utterance*>& utts,
                                const EmbedFn& embed) {
  Require<UsageError>(!utts.empty(), "improved pipeline on an empty corpus");
  EmbeddingSet utterance_level;
  utterance_level.reserve(utts.size());
  for (const auto* u : utts) {
    Embedding e;
    e.id = u->utterance_id;
    e.speaker_id = u->speaker_id;
    e.recording_id = u->recording_id;
    e.level = Level::kUtterance;
    e.vec = embed(*u);
    utterance_level.push_back(std::move(e));
  }
  auto recordings = AverageByLevel(utterance_level, Level::kRecording);
  auto centered = SubtractGlobalMean(recordings);
  return {std::move(centered.set), std::move(centered.mean)};
}

PipelineResult ImprovedPipeline(const corpus::Corpus& corpus, const EmbedFn& embed) {
  std::vector<const corpus::Utterance*> utts;
  utts.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) utts.push_back(&u);
  return ImprovedPipeline(utts, embed);
}

void SaveEmbeddings(const std::string& prefix, const EmbeddingSet& set) {
  CheckUniformDim(set);
  std::ofstream tsv(prefix + ".tsv");
  Require<IoError>(tsv.good(), "cannot write ", prefix, ".tsv");
  Mat m(set.size(), set.front().vec.size());
  for (size_t r = 0; r < set.size(); ++r) {
    const auto& e = set[r];
    std::string ops = "-";
    if (!e.applied_ops.empty()) {
      ops.clear();
      for (size_t i = 0; i < e.applied_ops.size(); ++i)
        ops += (i ? "+" : "") + e.applied_ops[i];
    }
    tsv << e.id << '\t' << e.speaker_id << '\t'
        << (e.recording_id.empty() ? "-" : e.recording_id) << '\t'
        << LevelName(e.level) << '\t' << ops << '\n';
    std::copy(e.vec.begin(), e.vec.end(), m.Row(r));
  }
  tsv.close();
  WriteSef(prefix + ".sef", m);
}

EmbeddingSet LoadEmbeddings(const std::string& prefix) {
  std::ifstream tsv(prefix + ".tsv");
  Require<IoError>(tsv.good(), "cannot open ", prefix, ".tsv");
  Mat m = ReadSef(prefix + ".sef");
  EmbeddingSet set;
  std::string line;
  while (std::getline(tsv, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    Embedding e;
    std::string level, ops;
    ss >> e.id >> e.speaker_id >> e.recording_id >> level >> ops;
    Require<IoError>(!level.empty(), "malformed embedding manifest line: ", line);
    if (e.recording_id == "-") e.recording_id.clear();
    e.level = ParseLevel(level);
    if (ops != "-") {
      std::istringstream os(ops);
      std::string op;
      while (std::getline(os, op, '+')) e.applied_ops.push_back(op);
    }
    set.push_back(std::move(e));
  }
  Require<IoError>(set.size() == m.rows, "embedding manifest and matrix disagree: ",
                   set.size(), " vs ", m.rows);
  for (size_t r = 0; r < set.size(); ++r)
    set[r].vec.assign(m.Row(r), m.Row(r) + m.cols);
  return set;
}

void SymmetricEig(const std::vector<double>& a_in, int n, std::vector<double>* w,
                  std::vector<double>* v) {
  Require<UsageError>(static_cast<int>(a_in.size()) == n * n,
                      "SymmetricEig: matrix size mismatch");
  std::vector<double> a = a_in;
  std::vector<double>& vec = *v;
  vec.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) vec[i * n + i] = 1.0;

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-28) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = tau >= 0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                  : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = a[p * n + k] = c * akp - s * akq;
          a[k * n + q] = a[q * n + k] = s * akp + c * akq;
        }
        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = a[q * n + p] = 0.0;
        for (int k = 0; k < n; ++k) {
          const double vkp = vec[k * n + p];
          const double vkq = vec[k * n + q];
          vec[k * n + p] = c * vkp - s * vkq;
          vec[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = a[i * n + i];
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return diag[x] > diag[y]; });
  w->resize(n);
  std::vector<double> sorted(static_cast<size_t>(n) * n);
  for (int c = 0; c < n; ++c) {
    (*w)[c] = diag[order[c]];
    for (int r = 0; r < n; ++r) sorted[r * n + c] = vec[r * n + order[c]];
  }
  vec = std::move(sorted);
}

}  // namespace spkembed::post
