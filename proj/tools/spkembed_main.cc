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

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spkembed/adaptation.h"
#include "spkembed/checkpoint.h"
#include "spkembed/config.h"
#include "spkembed/corpus.h"
#include "spkembed/errors.h"
#include "spkembed/extractor.h"
#include "spkembed/hash.h"
#include "spkembed/postproc.h"
#include "spkembed/training.h"

namespace spkembed::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using train::Real;

// One writer per run directory. A leftover LOCK from a crashed run must be
// removed by hand; the message says which file.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(fs::path(dir) / "LOCK") {
    fs::create_directories(dir);
    std::error_code ec;
    if (fs::exists(path_))
      throw UsageError(StrCat("run directory is locked by another process: ",
                              path_.string(), " (remove the file if stale)"));
    std::ofstream lock(path_);
    Require<IoError>(lock.good(), "cannot create lock file ", path_.string());
    lock << "pid " << ::getpid() << '\n';
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

void WriteResolvedConfig(const std::string& dir, const ExperimentConfig& cfg) {
  std::ofstream out(fs::path(dir) / "config.resolved.json");
  out << cfg.resolved.dump(2) << '\n';
  std::ofstream hashf(fs::path(dir) / "config.hash");
  hashf << cfg.hash << '\n';
}

std::string ReadFileTrimmed(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) return "";
  std::string s;
  std::getline(in, s);
  return s;
}

// A finished run with the same resolved config is a no-op; a different
// config under the same tag is refused rather than silently overwritten.
bool RunAlreadyDone(const std::string& run_dir, const ExperimentConfig& cfg) {
  if (!fs::exists(fs::path(run_dir) / "DONE")) return false;
  const std::string old_hash = ReadFileTrimmed(fs::path(run_dir) / "config.hash");
  if (old_hash == cfg.hash) return true;
  throw UsageError(StrCat("run directory ", run_dir,
                          " holds a finished run with a different config (hash ",
                          old_hash, " vs ", cfg.hash,
                          "); pick a new tag or delete the directory"));
}

void MarkDone(const std::string& run_dir) {
  std::ofstream done(fs::path(run_dir) / "DONE");
  done << "ok\n";
}

corpus::Corpus LoadCorpusChecked(const ExperimentConfig& cfg) {
  const std::string dir = cfg.CorpusDir();
  Require<UsageError>(fs::exists(fs::path(dir) / "manifest.tsv"),
                      "no corpus under ", dir,
                      "; produce it with `spkembed synth --config ...`");
  return corpus::LoadCorpus(dir);
}

int CmdSynth(const ExperimentConfig& cfg) {
  const std::string target = cfg.CorpusDir();
  corpus::Corpus c = corpus::GenerateCorpus(cfg.corpus_spec);

  const std::string staging = target + ".staging";
  fs::remove_all(staging);
  corpus::SaveCorpus(c, staging);
  const std::string new_hash = HashToHex(corpus::HashCorpusDir(staging));

  if (fs::exists(fs::path(target) / "corpus.hash")) {
    const std::string old_hash = ReadFileTrimmed(fs::path(target) / "corpus.hash");
    if (old_hash == new_hash) {
      fs::remove_all(staging);
      std::cout << "synth: corpus unchanged (hash " << new_hash << "), no-op\n";
      return 0;
    }
  }
  fs::remove_all(target);
  fs::create_directories(fs::path(target).parent_path());
  fs::rename(staging, target);
  std::cout << "synth: wrote " << c.utterances.size() << " utterances to "
            << target << " (hash " << new_hash << ")\n";
  return 0;
}

nn::ExtractorConfig BuildExtractorConfig(const ExperimentConfig& cfg,
                                         int input_dim, int num_speakers) {
  nn::ExtractorArch arch = nn::ParseExtractorArch(cfg.extractor.architecture);
  nn::ExtractorConfig model_cfg =
      arch == nn::ExtractorArch::kTdnn
          ? nn::ExtractorConfig::Tdnn(cfg.extractor.preset, input_dim, num_speakers)
          : nn::ExtractorConfig::MfaConformer(cfg.extractor.preset, input_dim,
                                              num_speakers);
  model_cfg.pooling = pool::ParsePoolingKind(cfg.extractor.pooling);
  model_cfg.attention_hidden = cfg.extractor.attention_hidden;
  model_cfg.reconstruction_branch = cfg.extractor.reconstruction_branch;
  model_cfg.reconstruction_dropout = cfg.extractor.reconstruction_dropout;
  return model_cfg;
}

void WriteEvalJson(const std::string& run_dir, const json& payload) {
  std::ofstream out(fs::path(run_dir) / "eval.json");
  out << payload.dump(2) << '\n';
}

int CmdTrainExtractor(const ExperimentConfig& cfg) {
  auto c = LoadCorpusChecked(cfg);
  auto split = corpus::SplitCorpus(c, cfg.cv_fraction, cfg.split_seed);
  const std::string run_dir = cfg.RunDir(cfg.extractor.tag);
  if (RunAlreadyDone(run_dir, cfg)) {
    std::cout << "train-extractor: run " << cfg.extractor.tag
              << " already complete, no-op\n";
    return 0;
  }
  DirLock lock(run_dir);
  WriteResolvedConfig(run_dir, cfg);

  nn::SpeakerExtractor<Real> model(
      BuildExtractorConfig(cfg, c.spec.feature_dim, c.spec.num_speakers),
      cfg.extractor.seed);
  train::TrainOptions opts;
  opts.schedule = cfg.extractor.schedule.ToSchedule();
  opts.batch_size = cfg.extractor.batch_size;
  opts.seed = cfg.extractor.seed;
  opts.lambda = cfg.extractor.reconstruction_lambda;
  opts.run_dir = run_dir;
  opts.config_hash = cfg.hash;
  opts.quiet = false;
  auto report = train::TrainExtractor(model, c, split, opts);

  WriteEvalJson(run_dir, {{"kind", "extractor"},
                          {"tag", cfg.extractor.tag},
                          {"seed", report.seed},
                          {"config_hash", report.config_hash},
                          {"cv_speaker_accuracy", report.final_cv_accuracy},
                          {"cv_ce", report.final_cv_ce}});
  MarkDone(run_dir);
  std::cout << "train-extractor: " << cfg.extractor.tag << " final cv accuracy "
            << report.final_cv_accuracy << "\n";
  return 0;
}

// Rebuild an extractor from a finished run directory.
nn::SpeakerExtractor<Real> LoadExtractorRun(const ExperimentConfig& cfg,
                                            const std::string& tag,
                                            const corpus::Corpus& c) {
  const std::string run_dir = cfg.RunDir(tag);
  const fs::path cfg_path = fs::path(run_dir) / "config.resolved.json";
  Require<UsageError>(fs::exists(cfg_path), "no finished run under ", run_dir,
                      "; produce it with `spkembed train-extractor --config ...`");
  ExperimentConfig run_cfg = LoadConfig(cfg_path.string(), {});
  nn::SpeakerExtractor<Real> model(
      BuildExtractorConfig(run_cfg, c.spec.feature_dim, c.spec.num_speakers),
      run_cfg.extractor.seed);
  num::LoadCheckpoint(model.Params(),
                      (fs::path(run_dir) / "final.ckpt").string());
  return model;
}

int CmdExtract(const ExperimentConfig& cfg) {
  auto c = LoadCorpusChecked(cfg);
  auto model = LoadExtractorRun(cfg, cfg.extract.run, c);
  post::EmbeddingSet set;
  set.reserve(c.utterances.size());
  for (const auto& u : c.utterances) {
    post::Embedding e;
    e.id = u.utterance_id;
    e.speaker_id = u.speaker_id;
    e.recording_id = u.recording_id;
    e.level = post::Level::kUtterance;
    e.vec = model.ExtractEmbedding(u.features);
    set.push_back(std::move(e));
  }
  const std::string prefix = cfg.EmbPrefix(cfg.extract.out);
  post::SaveEmbeddings(prefix, set);
  std::cout << "extract: wrote " << set.size() << " utterance embeddings to "
            << prefix << ".{tsv,sef}\n";
  return 0;
}

int CmdPostproc(const ExperimentConfig& cfg) {
  const std::string in_prefix = cfg.EmbPrefix(cfg.postproc.in);
  Require<UsageError>(fs::exists(in_prefix + ".tsv"), "no embedding set at ",
                      in_prefix, "; produce it with `spkembed extract --config ...`");
  post::EmbeddingSet set = post::LoadEmbeddings(in_prefix);
  const std::string out_prefix = cfg.EmbPrefix(cfg.postproc.out);

  for (const auto& op : cfg.postproc.chain) {
    if (op == "average_recording") {
      set = post::AverageByLevel(set, post::Level::kRecording);
    } else if (op == "average_speaker") {
      set = post::AverageByLevel(set, post::Level::kSpeaker);
    } else if (op == "mean_subtract") {
      auto centered = post::SubtractGlobalMean(set);
      set = std::move(centered.set);
      Mat mean(1, centered.mean.size());
      std::copy(centered.mean.begin(), centered.mean.end(), mean.Row(0));
      WriteSef(out_prefix + ".mean.sef", mean);
    } else if (op == "lda") {
      int out_dim = cfg.postproc.lda_dim;
      std::set<std::string> speakers;
      for (const auto& e : set) speakers.insert(e.speaker_id);
      if (out_dim <= 0)
        out_dim = std::min<int>(static_cast<int>(set.front().vec.size()),
                                static_cast<int>(speakers.size()) - 1);
      auto lda = post::FitLda(set, out_dim);
      set = post::ApplyLda(set, lda);
      WriteSef(out_prefix + ".lda.sef", lda.projection);
      json meta = {{"num_classes", lda.num_classes},
                   {"out_dim", out_dim},
                   {"eigenvalues", lda.eigenvalues},
                   {"fit_mean", lda.fit_mean}};
      std::ofstream meta_out(out_prefix + ".lda.json");
      meta_out << meta.dump(2) << '\n';
    } else if (op == "length_norm") {
      set = post::LengthNormalize(set);
    } else {
      throw ConfigError(StrCat(
          "postproc.chain: unknown op ", op,
          " (average_recording|average_speaker|mean_subtract|lda|length_norm)"));
    }
  }
  post::SaveEmbeddings(out_prefix, set);
  std::cout << "postproc: wrote " << set.size() << " embeddings to "
            << out_prefix << ".{tsv,sef}\n";
  return 0;
}

adapt::EmbeddingSource ResolveEmbeddingSource(const ExperimentConfig& cfg,
                                              const corpus::Corpus& c) {
  const std::string& spec = cfg.am.embedding_source;
  if (spec == "none") return {};
  if (spec.rfind("file:", 0) == 0) {
    const std::string prefix = cfg.EmbPrefix(spec.substr(5));
    Require<UsageError>(fs::exists(prefix + ".tsv"), "no embedding set at ",
                        prefix,
                        "; produce it with `spkembed postproc --config ...`");
    return adapt::SourceFromEmbeddings(post::LoadEmbeddings(prefix));
  }
  if (spec.rfind("noise:", 0) == 0) {
    const uint64_t seed = std::stoull(spec.substr(6));
    return adapt::MakeNoiseSource(cfg.am.noise_dim, seed, c.RecordingIds());
  }
  if (spec.rfind("concat:", 0) == 0) {
    std::vector<adapt::EmbeddingSource> parts;
    std::string rest = spec.substr(7);
    size_t begin = 0;
    while (begin <= rest.size()) {
      size_t comma = rest.find(',', begin);
      const std::string name = rest.substr(begin, comma - begin);
      Require<ConfigError>(!name.empty(), "am.embedding_source: empty name in ", spec);
      const std::string prefix = cfg.EmbPrefix(name);
      Require<UsageError>(fs::exists(prefix + ".tsv"), "no embedding set at ",
                          prefix,
                          "; produce it with `spkembed postproc --config ...`");
      parts.push_back(adapt::SourceFromEmbeddings(post::LoadEmbeddings(prefix)));
      if (comma == std::string::npos) break;
      begin = comma + 1;
    }
    return adapt::ConcatSources(parts);
  }
  throw ConfigError(StrCat("am.embedding_source must be none|file:<set>|noise:<seed>|",
                           "concat:<set,...>, got ", spec));
}

adapt::AmConfig BuildAmConfig(const ExperimentConfig& cfg, int input_dim,
                              int embedding_dim) {
  adapt::AmConfig am;
  am.input_dim = input_dim;
  am.num_classes = corpus::kContentClasses;
  am.blocks = cfg.am.blocks;
  am.d_model = cfg.am.d_model;
  am.heads = cfg.am.heads;
  am.ff_dim = cfg.am.ff_dim;
  am.conv_kernel = cfg.am.conv_kernel;
  am.site = adapt::ParseIntegrationSite(cfg.am.integration);
  am.weight_init = cfg.am.weight_init;
  am.freeze_weight_at_zero = cfg.am.freeze_weight_at_zero;
  am.embedding_dim = embedding_dim;
  return am;
}

int CmdTrainAm(const ExperimentConfig& cfg) {
  auto c = LoadCorpusChecked(cfg);
  auto split = corpus::SplitCorpus(c, cfg.cv_fraction, cfg.split_seed);
  const std::string run_dir = cfg.RunDir(cfg.am.tag);
  if (RunAlreadyDone(run_dir, cfg)) {
    std::cout << "train-am: run " << cfg.am.tag << " already complete, no-op\n";
    return 0;
  }
  DirLock lock(run_dir);
  WriteResolvedConfig(run_dir, cfg);

  adapt::EmbeddingSource source = ResolveEmbeddingSource(cfg, c);
  adapt::AdaptedAm<Real> model(
      BuildAmConfig(cfg, c.spec.feature_dim, source.dim), cfg.am.seed);
  train::TrainOptions opts;
  opts.schedule = cfg.am.schedule.ToSchedule();
  opts.batch_size = cfg.am.batch_size;
  opts.seed = cfg.am.seed;
  opts.train_fraction = cfg.am.train_fraction;
  opts.run_dir = run_dir;
  opts.config_hash = cfg.hash;
  opts.quiet = false;
  auto report = train::TrainAdaptedAm(
      model, c, split, source.kind == adapt::SourceKind::kNone ? nullptr : &source,
      opts);

  WriteEvalJson(run_dir, {{"kind", "am"},
                          {"tag", cfg.am.tag},
                          {"seed", report.seed},
                          {"config_hash", report.config_hash},
                          {"cv_frame_accuracy", report.final_cv_accuracy},
                          {"cv_frame_ce", report.final_cv_ce}});
  MarkDone(run_dir);
  std::cout << "train-am: " << cfg.am.tag << " final cv frame ce "
            << report.final_cv_ce << "\n";
  return 0;
}

int CmdEval(const ExperimentConfig& cfg) {
  const std::string run_dir = cfg.RunDir(cfg.eval.run);
  const fs::path run_cfg_path = fs::path(run_dir) / "config.resolved.json";
  Require<UsageError>(fs::exists(run_cfg_path), "no run under ", run_dir,
                      "; produce it with `spkembed train-extractor` or "
                      "`spkembed train-am`");
  ExperimentConfig run_cfg = LoadConfig(run_cfg_path.string(), {});
  auto c = LoadCorpusChecked(cfg);
  auto split = corpus::SplitCorpus(c, run_cfg.cv_fraction, run_cfg.split_seed);
  train::TrainReport report = train::LoadTrainReport(run_dir);

  if (report.kind == "extractor") {
    auto model = LoadExtractorRun(cfg, cfg.eval.run, c);
    auto eval = train::EvalSpeakerId(model, c, split.cross_validation);
    WriteEvalJson(run_dir, {{"kind", "extractor"},
                            {"tag", cfg.eval.run},
                            {"seed", report.seed},
                            {"config_hash", report.config_hash},
                            {"cv_speaker_accuracy", eval.accuracy},
                            {"cv_ce", eval.mean_ce}});
    std::cout << "eval: " << cfg.eval.run << " cv speaker accuracy "
              << eval.accuracy << "\n";
  } else {
    adapt::EmbeddingSource source = ResolveEmbeddingSource(run_cfg, c);
    adapt::AdaptedAm<Real> model(
        BuildAmConfig(run_cfg, c.spec.feature_dim, source.dim), run_cfg.am.seed);
    num::LoadCheckpoint(model.Params(),
                        (fs::path(run_dir) / "final.ckpt").string());
    auto eval = train::EvalFrames(
        model, c, split.cross_validation,
        source.kind == adapt::SourceKind::kNone ? nullptr : &source);
    WriteEvalJson(run_dir, {{"kind", "am"},
                            {"tag", cfg.eval.run},
                            {"seed", report.seed},
                            {"config_hash", report.config_hash},
                            {"cv_frame_accuracy", eval.frame_accuracy},
                            {"cv_frame_ce", eval.frame_ce}});
    std::cout << "eval: " << cfg.eval.run << " cv frame accuracy "
              << eval.frame_accuracy << "\n";
  }
  return 0;
}

json ReadEvalArtifact(const ExperimentConfig& cfg, const std::string& tag,
                      const char* expected_kind, const char* producer) {
  const fs::path path = fs::path(cfg.RunDir(tag)) / "eval.json";
  Require<UsageError>(fs::exists(path), "missing evaluation artifact ",
                      path.string(), "; produce it with `spkembed ", producer,
                      " --config ...` for run ", tag);
  std::ifstream in(path);
  json j = json::parse(in);
  Require<UsageError>(j.at("kind").get<std::string>() == expected_kind,
                      "run ", tag, " is a ", j.at("kind").get<std::string>(),
                      " run, expected ", expected_kind);
  return j;
}

struct TableCell {
  std::string label;
  std::vector<std::string> values;
};

void WriteTable(const std::string& dir, const std::string& name,
                const std::vector<std::string>& header,
                const std::vector<TableCell>& rows) {
  fs::create_directories(dir);
  std::vector<size_t> widths(header.size());
  for (size_t i = 0; i < header.size(); ++i) widths[i] = header[i].size();
  for (const auto& row : rows) {
    widths[0] = std::max(widths[0], row.label.size());
    for (size_t i = 0; i < row.values.size(); ++i)
      widths[i + 1] = std::max(widths[i + 1], row.values[i].size());
  }
  std::ofstream txt(fs::path(dir) / (name + ".txt"));
  std::ofstream csv(fs::path(dir) / (name + ".csv"));
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  for (size_t i = 0; i < header.size(); ++i) {
    txt << (i ? "  " : "") << pad(header[i], widths[i]);
    csv << (i ? "," : "") << header[i];
  }
  txt << '\n';
  csv << '\n';
  for (const auto& row : rows) {
    txt << pad(row.label, widths[0]);
    csv << row.label;
    for (size_t i = 0; i < row.values.size(); ++i) {
      txt << "  " << pad(row.values[i], widths[i + 1]);
      csv << ',' << row.values[i];
    }
    txt << '\n';
    csv << '\n';
  }
}

std::string Pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return std::string(buf);
}

std::string Fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return std::string(buf);
}

int CmdReport(const ExperimentConfig& cfg) {
  const std::string dir = cfg.ReportDir();
  Require<ConfigError>(!cfg.report.pooling.empty() ||
                           !cfg.report.postproc.empty() ||
                           !cfg.report.embedding.empty(),
                       "report: no grids configured under report.*");

  if (!cfg.report.pooling.empty()) {
    std::vector<TableCell> rows;
    for (const auto& row : cfg.report.pooling) {
      TableCell cell{row.label, {}};
      json ext = ReadEvalArtifact(cfg, row.extractor_run, "extractor",
                                  "train-extractor");
      cell.values.push_back(Pct(ext.at("cv_speaker_accuracy").get<double>()));
      if (!row.am_run.empty()) {
        json am = ReadEvalArtifact(cfg, row.am_run, "am", "train-am");
        cell.values.push_back(Pct(am.at("cv_frame_accuracy").get<double>()));
        cell.values.push_back(Fixed4(am.at("cv_frame_ce").get<double>()));
      } else {
        cell.values.insert(cell.values.end(), {"-", "-"});
      }
      rows.push_back(std::move(cell));
    }
    WriteTable(dir, "pooling",
               {"pooling", "spkid_acc[%]", "am_frame_acc[%]", "am_frame_ce"}, rows);
  }

  if (!cfg.report.postproc.empty()) {
    std::vector<TableCell> rows;
    for (const auto& row : cfg.report.postproc) {
      TableCell cell{row.label, {}};
      if (!row.extractor_run.empty()) {
        json ext = ReadEvalArtifact(cfg, row.extractor_run, "extractor",
                                    "train-extractor");
        cell.values.push_back(Pct(ext.at("cv_speaker_accuracy").get<double>()));
      } else {
        cell.values.push_back("-");
      }
      json am = ReadEvalArtifact(cfg, row.am_run, "am", "train-am");
      cell.values.push_back(Pct(am.at("cv_frame_accuracy").get<double>()));
      cell.values.push_back(Fixed4(am.at("cv_frame_ce").get<double>()));
      rows.push_back(std::move(cell));
    }
    WriteTable(dir, "postproc",
               {"postproc", "spkid_acc[%]", "am_frame_acc[%]", "am_frame_ce"}, rows);
  }

  if (!cfg.report.embedding.empty()) {
    std::vector<TableCell> rows;
    for (const auto& row : cfg.report.embedding) {
      TableCell cell{row.label, {}};
      json am = ReadEvalArtifact(cfg, row.am_run, "am", "train-am");
      cell.values.push_back(Pct(am.at("cv_frame_accuracy").get<double>()));
      cell.values.push_back(Fixed4(am.at("cv_frame_ce").get<double>()));
      rows.push_back(std::move(cell));
    }
    WriteTable(dir, "embedding",
               {"embedding", "am_frame_acc[%]", "am_frame_ce"}, rows);
  }

  std::cout << "report: tables written under " << dir << "\n";
  return 0;
}

}  // namespace
}  // namespace spkembed::cli

int main(int argc, char** argv) {
  using namespace spkembed;
  CLI::App app{"synthetic speaker-embedding extraction and adaptation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "experiment config (JSON)")
      ->required();
  app.add_option("--set", overrides,
                 "override a config key, e.g. --set extractor.pooling=average");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  auto* train_ext =
      app.add_subcommand("train-extractor", "train a speaker embedding extractor");
  auto* extract =
      app.add_subcommand("extract", "extract utterance-level embeddings");
  auto* postproc =
      app.add_subcommand("postproc", "apply a post-processing chain");
  auto* train_am =
      app.add_subcommand("train-am", "train the adapted acoustic model");
  auto* eval = app.add_subcommand("eval", "re-evaluate a finished run");
  auto* report = app.add_subcommand("report", "assemble result tables");

  CLI11_PARSE(app, argc, argv);

  try {
    cli::ExperimentConfig cfg = cli::LoadConfig(config_path, overrides);
    if (synth->parsed()) return cli::CmdSynth(cfg);
    if (train_ext->parsed()) return cli::CmdTrainExtractor(cfg);
    if (extract->parsed()) return cli::CmdExtract(cfg);
    if (postproc->parsed()) return cli::CmdPostproc(cfg);
    if (train_am->parsed()) return cli::CmdTrainAm(cfg);
    if (eval->parsed()) return cli::CmdEval(cfg);
    if (report->parsed()) return cli::CmdReport(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
