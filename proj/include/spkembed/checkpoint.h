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

#ifndef SPKEMBED_CHECKPOINT_H_
#define SPKEMBED_CHECKPOINT_H_

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spkembed/errors.h"
#include "spkembed/optim.h"

namespace spkembed::num {

// Checkpoint container (see the format notes in the repo README):
//   magic "SECK", uint32 version, uint32 parameter count, then per parameter
//   (sorted by name): uint32 name length, name bytes, uint32 ndim,
//   uint32 dims..., little-endian float32 values. Optimizer state is not
//   persisted.
template <typename T>
void SaveCheckpoint(const ParamStore<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require<IoError>(out.good(), "cannot open checkpoint for writing: ", path);
  out.write("SECK", 4);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  uint32_t count = 0;
  params.ForEach([&](const Parameter<T>&) { ++count; });
  out.write(reinterpret_cast<const char*>(&count), 4);
  params.ForEach([&](const Parameter<T>& p) {
    uint32_t name_len = static_cast<uint32_t>(p.name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 4);
    out.write(p.name.data(), name_len);
    const auto& shape = p.value.Shape();
    uint32_t ndim = static_cast<uint32_t>(shape.size());
    out.write(reinterpret_cast<const char*>(&ndim), 4);
    for (size_t d : shape) {
      uint32_t dd = static_cast<uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&dd), 4);
    }
    for (T v : p.value.Value()) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  });
  Require<IoError>(out.good(), "checkpoint write failed: ", path);
}

// Loads values into an existing store; names and shapes must match the
// model that produced the file.
template <typename T>
void LoadCheckpoint(ParamStore<T>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require<IoError>(in.good(), "cannot open checkpoint: ", path);
  char magic[4];
  in.read(magic, 4);
  Require<IoError>(in.good() && std::string(magic, 4) == "SECK",
                   "not a checkpoint file: ", path);
  uint32_t version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  Require<IoError>(in.good() && version == 1, "unsupported checkpoint version in ",
                   path);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), 4);
    std::vector<size_t> shape(ndim);
    size_t n = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      uint32_t dd = 0;
      in.read(reinterpret_cast<char*>(&dd), 4);
      shape[d] = dd;
      n *= dd;
    }
    Require<IoError>(in.good(), "truncated checkpoint: ", path);
    Require<IoError>(params.Has(name), "checkpoint parameter ", name,
                     " does not exist in this model");
    auto& p = params.Get(name);
    Require<IoError>(p.value.Shape() == shape, "checkpoint parameter ", name,
                     " has a mismatched shape");
    std::vector<T>& w = p.value.MutableValue();
    for (size_t j = 0; j < n; ++j) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), 4);
      w[j] = static_cast<T>(f);
    }
    Require<IoError>(in.good(), "truncated checkpoint payload: ", path);
  }
}

}  // namespace spkembed::num

#endif  // SPKEMBED_CHECKPOINT_H_
