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

#ifndef SPKEMBED_MAT_H_
#define SPKEMBED_MAT_H_

#include <cstddef>
#include <string>
#include <vector>

namespace spkembed {

// Dense row-major float matrix for stored data (features, embeddings,
// transforms). Differentiable computation lives in num::Tensor instead.
struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<float> data;

  Mat() = default;
  Mat(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  float& At(size_t r, size_t c) { return data[r * cols + c]; }
  float At(size_t r, size_t c) const { return data[r * cols + c]; }
  const float* Row(size_t r) const { return data.data() + r * cols; }
  float* Row(size_t r) { return data.data() + r * cols; }
  bool Empty() const { return data.empty(); }
};

// SEF1 container: magic "SEF1", then rows and cols as little-endian uint32,
// then rows*cols little-endian float32, row-major.
void WriteSef(const std::string& path, const Mat& m);
Mat ReadSef(const std::string& path);

}  // namespace spkembed

#endif  // SPKEMBED_MAT_H_
