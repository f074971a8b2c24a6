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

#include "spkembed/hash.h"

#include <cstdio>
#include <fstream>

#include "spkembed/errors.h"

namespace spkembed {

uint64_t HashBytes(const void* data, size_t len) {
  Fnv1a h;
  h.Update(data, len);
  return h.Digest();
}

uint64_t HashString(const std::string& s) { return HashBytes(s.data(), s.size()); }

uint64_t HashFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require<IoError>(in.good(), "cannot open file for hashing: ", path);
  Fnv1a h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h.Update(buf, static_cast<size_t>(in.gcount()));
  }
  return h.Digest();
}

uint64_t HashFiles(const std::vector<std::string>& paths) {
  Fnv1a h;
  for (const auto& p : paths) {
    h.Update(p);
    uint64_t fh = HashFile(p);
    h.Update(&fh, sizeof(fh));
  }
  return h.Digest();
}

std::string HashToHex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace spkembed
