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

#include "spkembed/config.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "spkembed/errors.h"
#include "spkembed/hash.h"

namespace spkembed::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json ScheduleJson(const ScheduleConfig& s) {
  return {{"lr_start", s.lr_start},
          {"lr_peak", s.lr_peak},
          {"lr_end_phase2", s.lr_end_phase2},
          {"lr_final", s.lr_final},
          {"epochs", {s.epochs_phase1, s.epochs_phase2, s.epochs_phase3}},
          {"decay", s.decay}};
}

ScheduleConfig ScheduleFromJson(const json& j) {
  ScheduleConfig s;
  s.lr_start = j.at("lr_start").get<double>();
  s.lr_peak = j.at("lr_peak").get<double>();
  s.lr_end_phase2 = j.at("lr_end_phase2").get<double>();
  s.lr_final = j.at("lr_final").get<double>();
  const auto& e = j.at("epochs");
  Require<ConfigError>(e.is_array() && e.size() == 3,
                       "schedule.epochs must be a 3-element array");
  s.epochs_phase1 = e[0].get<int>();
  s.epochs_phase2 = e[1].get<int>();
  s.epochs_phase3 = e[2].get<int>();
  s.decay = j.at("decay").get<std::string>();
  return s;
}

// The schema is the default config itself: a file key is legal iff the same
// path exists here. Report rows are arrays of row objects.
const json& ScheduleSchema() {
  static const json schema = ScheduleJson(ScheduleConfig{});
  return schema;
}

void CheckKnownKeys(const json& node, const json& schema, const std::string& path) {
  if (!node.is_object()) return;
  Require<ConfigError>(schema.is_object(), "config: ", path.empty() ? "root" : path,
                       " must not be an object");
  for (const auto& [key, value] : node.items()) {
    const std::string child = path.empty() ? key : path + "." + key;
    Require<ConfigError>(schema.contains(key), "config: unknown key ", child);
    const json& sub = schema.at(key);
    if (sub.is_array() && !sub.empty() && sub[0].is_object()) {
      // Array of row objects: validate each element against the row schema.
      Require<ConfigError>(value.is_array(), "config: ", child, " must be an array");
      for (size_t i = 0; i < value.size(); ++i)
        CheckKnownKeys(value[i], sub[0], StrCat(child, "[", i, "]"));
    } else if (sub.is_object()) {
      CheckKnownKeys(value, sub, child);
    }
  }
}

std::vector<ReportRow> RowsFromJson(const json& rows) {
  std::vector<ReportRow> out;
  for (const auto& r : rows) {
    ReportRow row;
    row.label = r.at("label").get<std::string>();
    if (r.contains("extractor_run"))
      row.extractor_run = r.at("extractor_run").get<std::string>();
    if (r.contains("am_run")) row.am_run = r.at("am_run").get<std::string>();
    out.push_back(std::move(row));
  }
  return out;
}

json ParseOverrideValue(const std::string& text) {
  json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return json(text);  // bare string
  return parsed;
}

void ApplyOverride(json& root, const std::string& assignment) {
  auto eq = assignment.find('=');
  Require<ConfigError>(eq != std::string::npos && eq > 0,
                       "--set expects key.path=value, got ", assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json* node = &root;
  size_t begin = 0;
  for (;;) {
    size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    Require<ConfigError>(!key.empty(), "--set: empty key segment in ", path);
    if (dot == std::string::npos) {
      (*node)[key] = ParseOverrideValue(value);
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

}  // namespace

train::OclrSchedule ScheduleConfig::ToSchedule() const {
  train::OclrSchedule s;
  s.lr_start = lr_start;
  s.lr_peak = lr_peak;
  s.lr_end_phase2 = lr_end_phase2;
  s.lr_final = lr_final;
  s.epochs_phase1 = epochs_phase1;
  s.epochs_phase2 = epochs_phase2;
  s.epochs_phase3 = epochs_phase3;
  s.final_decay = train::ParseFinalDecay(decay);
  return s;
}

std::string ExperimentConfig::CorpusDir() const {
  return (fs::path(output_root) / corpus_dir).string();
}
std::string ExperimentConfig::RunDir(const std::string& tag) const {
  Require<ConfigError>(!tag.empty(), "run tag must not be empty");
  return (fs::path(output_root) / "runs" / tag).string();
}
std::string ExperimentConfig::EmbPrefix(const std::string& name) const {
  Require<ConfigError>(!name.empty(), "embedding set name must not be empty");
  fs::create_directories(fs::path(output_root) / "emb");
  return (fs::path(output_root) / "emb" / name).string();
}
std::string ExperimentConfig::ReportDir() const {
  return (fs::path(output_root) / "report").string();
}

json DefaultConfigJson() {
  ExperimentConfig d;
  json row_schema = {{"label", ""}, {"extractor_run", ""}, {"am_run", ""}};
  json j;
  j["output_root"] = d.output_root;
  j["corpus"] = {{"num_speakers", d.corpus_spec.num_speakers},
                 {"recordings_per_speaker", d.corpus_spec.recordings_per_speaker},
                 {"utterances_per_recording", d.corpus_spec.utterances_per_recording},
                 {"frames_min", d.corpus_spec.frames_min},
                 {"frames_max", d.corpus_spec.frames_max},
                 {"feature_dim", d.corpus_spec.feature_dim},
                 {"speaker_factor_dim", d.corpus_spec.speaker_factor_dim},
                 {"channel_factor_dim", d.corpus_spec.channel_factor_dim},
                 {"noise_scale", d.corpus_spec.noise_scale},
                 {"seed", d.corpus_spec.seed},
                 {"dir", d.corpus_dir}};
  j["split"] = {{"cv_fraction", d.cv_fraction}, {"seed", d.split_seed}};
  j["extractor"] = {{"tag", d.extractor.tag},
                    {"architecture", d.extractor.architecture},
                    {"preset", d.extractor.preset},
                    {"pooling", d.extractor.pooling},
                    {"attention_hidden", d.extractor.attention_hidden},
                    {"reconstruction_branch", d.extractor.reconstruction_branch},
                    {"reconstruction_lambda", d.extractor.reconstruction_lambda},
                    {"reconstruction_dropout", d.extractor.reconstruction_dropout},
                    {"seed", d.extractor.seed},
                    {"batch_size", d.extractor.batch_size},
                    {"schedule", ScheduleJson(d.extractor.schedule)}};
  j["extract"] = {{"run", d.extract.run}, {"out", d.extract.out}};
  j["postproc"] = {{"in", d.postproc.in},
                   {"out", d.postproc.out},
                   {"chain", d.postproc.chain},
                   {"lda_dim", d.postproc.lda_dim}};
  j["am"] = {{"tag", d.am.tag},
             {"blocks", d.am.blocks},
             {"d_model", d.am.d_model},
             {"heads", d.am.heads},
             {"ff_dim", d.am.ff_dim},
             {"conv_kernel", d.am.conv_kernel},
             {"integration", d.am.integration},
             {"weight_init", d.am.weight_init},
             {"freeze_weight_at_zero", d.am.freeze_weight_at_zero},
             {"embedding_source", d.am.embedding_source},
             {"noise_dim", d.am.noise_dim},
             {"seed", d.am.seed},
             {"batch_size", d.am.batch_size},
             {"train_fraction", d.am.train_fraction},
             {"schedule", ScheduleJson(d.am.schedule)}};
  j["eval"] = {{"run", d.eval.run}};
  j["report"] = {{"pooling", json::array({row_schema})},
                 {"postproc", json::array({row_schema})},
                 {"embedding", json::array({row_schema})}};
  return j;
}

ExperimentConfig LoadConfig(const std::string& path,
                            const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  Require<IoError>(in.good(), "cannot open config: ", path);
  json file = json::parse(in, nullptr, /*allow_exceptions=*/false);
  Require<ConfigError>(!file.is_discarded(), "config is not valid JSON: ", path);
  Require<ConfigError>(file.is_object(), "config root must be a JSON object: ", path);

  json schema = DefaultConfigJson();
  CheckKnownKeys(file, schema, "");

  json resolved = schema;
  // report rows are data, not defaults; start empty
  resolved["report"] = {{"pooling", json::array()},
                        {"postproc", json::array()},
                        {"embedding", json::array()}};
  resolved.merge_patch(file);
  for (const auto& o : overrides) ApplyOverride(resolved, o);
  CheckKnownKeys(resolved, schema, "");

  if (const char* env_root = std::getenv("SPKEMBED_OUTPUT_ROOT");
      env_root != nullptr && !file.contains("output_root")) {
    bool overridden = false;
    for (const auto& o : overrides)
      if (o.rfind("output_root=", 0) == 0) overridden = true;
    if (!overridden) resolved["output_root"] = std::string(env_root);
  }

  ExperimentConfig cfg;
  cfg.output_root = resolved.at("output_root").get<std::string>();
  const json& c = resolved.at("corpus");
  cfg.corpus_spec.num_speakers = c.at("num_speakers").get<int>();
  cfg.corpus_spec.recordings_per_speaker = c.at("recordings_per_speaker").get<int>();
  cfg.corpus_spec.utterances_per_recording =
      c.at("utterances_per_recording").get<int>();
  cfg.corpus_spec.frames_min = c.at("frames_min").get<int>();
  cfg.corpus_spec.frames_max = c.at("frames_max").get<int>();
  cfg.corpus_spec.feature_dim = c.at("feature_dim").get<int>();
  cfg.corpus_spec.speaker_factor_dim = c.at("speaker_factor_dim").get<int>();
  cfg.corpus_spec.channel_factor_dim = c.at("channel_factor_dim").get<int>();
  cfg.corpus_spec.noise_scale = c.at("noise_scale").get<double>();
  cfg.corpus_spec.seed = c.at("seed").get<uint64_t>();
  cfg.corpus_dir = c.at("dir").get<std::string>();

  cfg.cv_fraction = resolved.at("split").at("cv_fraction").get<double>();
  cfg.split_seed = resolved.at("split").at("seed").get<uint64_t>();

  const json& e = resolved.at("extractor");
  cfg.extractor.tag = e.at("tag").get<std::string>();
  cfg.extractor.architecture = e.at("architecture").get<std::string>();
  cfg.extractor.preset = e.at("preset").get<std::string>();
  cfg.extractor.pooling = e.at("pooling").get<std::string>();
  cfg.extractor.attention_hidden = e.at("attention_hidden").get<int>();
  cfg.extractor.reconstruction_branch = e.at("reconstruction_branch").get<bool>();
  cfg.extractor.reconstruction_lambda = e.at("reconstruction_lambda").get<double>();
  cfg.extractor.reconstruction_dropout = e.at("reconstruction_dropout").get<double>();
  cfg.extractor.seed = e.at("seed").get<uint64_t>();
  cfg.extractor.batch_size = e.at("batch_size").get<int>();
  cfg.extractor.schedule = ScheduleFromJson(e.at("schedule"));

  cfg.extract.run = resolved.at("extract").at("run").get<std::string>();
  cfg.extract.out = resolved.at("extract").at("out").get<std::string>();

  const json& p = resolved.at("postproc");
  cfg.postproc.in = p.at("in").get<std::string>();
  cfg.postproc.out = p.at("out").get<std::string>();
  cfg.postproc.chain = p.at("chain").get<std::vector<std::string>>();
  cfg.postproc.lda_dim = p.at("lda_dim").get<int>();

  const json& a = resolved.at("am");
  cfg.am.tag = a.at("tag").get<std::string>();
  cfg.am.blocks = a.at("blocks").get<int>();
  cfg.am.d_model = a.at("d_model").get<int>();
  cfg.am.heads = a.at("heads").get<int>();
  cfg.am.ff_dim = a.at("ff_dim").get<int>();
  cfg.am.conv_kernel = a.at("conv_kernel").get<int>();
  cfg.am.integration = a.at("integration").get<std::string>();
  cfg.am.weight_init = a.at("weight_init").get<double>();
  cfg.am.freeze_weight_at_zero = a.at("freeze_weight_at_zero").get<bool>();
  cfg.am.embedding_source = a.at("embedding_source").get<std::string>();
  cfg.am.noise_dim = a.at("noise_dim").get<int>();
  cfg.am.seed = a.at("seed").get<uint64_t>();
  cfg.am.batch_size = a.at("batch_size").get<int>();
  cfg.am.train_fraction = a.at("train_fraction").get<double>();
  cfg.am.schedule = ScheduleFromJson(a.at("schedule"));

  cfg.eval.run = resolved.at("eval").at("run").get<std::string>();

  cfg.report.pooling = RowsFromJson(resolved.at("report").at("pooling"));
  cfg.report.postproc = RowsFromJson(resolved.at("report").at("postproc"));
  cfg.report.embedding = RowsFromJson(resolved.at("report").at("embedding"));

  cfg.resolved = std::move(resolved);
  cfg.hash = HashToHex(HashString(cfg.resolved.dump()));
  return cfg;
}

}  // namespace spkembed::cli
