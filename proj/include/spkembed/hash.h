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

#ifndef SPKEMBED_HASH_H_
#define SPKEMBED_HASH_H_

#include <cstdint>
#include <string>
#include <vector>

namespace spkembed {

// Incremental FNV-1a 64. Content fingerprinting only (idempotence and
// determinism checks), not collision-resistant against an adversary.
class Fnv1a {
 public:
  void Update(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ULL;
    }
  }
  void Update(const std::string& s) { Update(s.data(), s.size()); }
  uint64_t Digest() const { return hash_; }

 private:
  uint64_t hash_ = 1469598103934665603ULL;
};

uint64_t HashBytes(const void* data, size_t len);
uint64_t HashString(const std::string& s);

// Hash of a file's raw bytes. Throws IoError if unreadable.
uint64_t HashFile(const std::string& path);

// Combined hash over the named files in the given order (each file's path
// and content both folded in).
uint64_t HashFiles(const std::vector<std::string>& paths);

std::string HashToHex(uint64_t h);

}  // namespace spkembed

#endif  // SPKEMBED_HASH_H_
