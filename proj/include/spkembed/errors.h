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

#ifndef SPKEMBED_ERRORS_H_
#define SPKEMBED_ERRORS_H_

#include <sstream>
#include <stdexcept>
#include <string>

namespace spkembed {

// Invalid configuration value; message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/matrix dimension mismatch.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (backward on non-scalar, missing gradient, mixed levels, ...).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// File or serialization failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void StrAppend(std::ostringstream&) {}
template <typename Arg, typename... Rest>
void StrAppend(std::ostringstream& os, const Arg& arg, const Rest&... rest) {
  os << arg;
  StrAppend(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string StrCat(const Args&... args) {
  std::ostringstream os;
  detail::StrAppend(os, args...);
  return os.str();
}

template <typename Error = UsageError, typename... Args>
void Require(bool condition, const Args&... args) {
  if (!condition) throw Error(StrCat(args...));
}

}  // namespace spkembed

#endif  // SPKEMBED_ERRORS_H_
