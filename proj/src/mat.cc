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

#include "spkembed/mat.h"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "spkembed/errors.h"

namespace spkembed {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'F', '1'};

static_assert(sizeof(float) == 4, "float must be 32-bit");

// All supported targets are little-endian; verified once at load time.
bool HostIsLittleEndian() {
  uint32_t x = 1;
  char c;
  std::memcpy(&c, &x, 1);
  return c == 1;
}

}  // namespace

void WriteSef(const std::string& path, const Mat& m) {
  Require<IoError>(HostIsLittleEndian(), "SEF1 writer requires a little-endian host");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require<IoError>(out.good(), "cannot open for writing: ", path);
  out.write(kMagic, 4);
  uint32_t r = static_cast<uint32_t>(m.rows);
  uint32_t c = static_cast<uint32_t>(m.cols);
  out.write(reinterpret_cast<const char*>(&r), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  Require<IoError>(out.good(), "write failed: ", path);
}

Mat ReadSef(const std::string& path) {
  Require<IoError>(HostIsLittleEndian(), "SEF1 reader requires a little-endian host");
  std::ifstream in(path, std::ios::binary);
  Require<IoError>(in.good(), "cannot open: ", path);
  char magic[4];
  in.read(magic, 4);
  Require<IoError>(in.good() && std::memcmp(magic, kMagic, 4) == 0,
                   "not a SEF1 file: ", path);
  uint32_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), 4);
  in.read(reinterpret_cast<char*>(&c), 4);
  Require<IoError>(in.good(), "truncated SEF1 header: ", path);
  Mat m(r, c);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  Require<IoError>(in.good(), "truncated SEF1 payload: ", path);
  return m;
}

}  // namespace spkembed
