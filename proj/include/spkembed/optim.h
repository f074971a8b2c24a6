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

#ifndef SPKEMBED_OPTIM_H_
#define SPKEMBED_OPTIM_H_

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spkembed/errors.h"
#include "spkembed/rng.h"
#include "spkembed/tensor.h"

namespace spkembed::num {

enum class Init { kZeros, kOnes, kNormalScaled, kConst };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> m, v;  // Adam first/second moments
  int64_t steps = 0;
  bool trainable = true;
};

// Named parameters with deterministic (name-sorted) iteration order.
// Every parameter draws init values from its own seed stream keyed by
// (base_seed, name): creating extra parameters elsewhere never perturbs
// the init of the rest.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed = 0) : init_seed_(init_seed) {}

  Tensor<T> Create(const std::string& name, std::vector<size_t> shape,
                   Init init, double scale = 1.0) {
    Require<UsageError>(!params_.count(name), "duplicate parameter: ", name);
    size_t n = Tensor<T>::NumElements(shape);
    std::vector<T> values(n, T(0));
    switch (init) {
      case Init::kZeros:
        break;
      case Init::kOnes:
        std::fill(values.begin(), values.end(), T(1));
        break;
      case Init::kConst:
        std::fill(values.begin(), values.end(), static_cast<T>(scale));
        break;
      case Init::kNormalScaled: {
        Rng rng(FoldSeed(init_seed_, "param." + name));
        rng.FillGaussian(values, scale);
        break;
      }
    }
    auto param = std::make_unique<Parameter<T>>();
    param->name = name;
    param->value = Tensor<T>::FromVector(std::move(values), std::move(shape));
    param->value.SetRequiresGrad(true);
    Tensor<T> handle = param->value;
    params_.emplace(name, std::move(param));
    return handle;
  }

  // Affine weight with 1/sqrt(fan_in) scaling.
  Tensor<T> CreateAffineWeight(const std::string& name, size_t fan_in,
                               size_t fan_out) {
    return Create(name, {fan_in, fan_out}, Init::kNormalScaled,
                  1.0 / std::sqrt(static_cast<double>(fan_in)));
  }

  Parameter<T>& Get(const std::string& name) {
    auto it = params_.find(name);
    Require<UsageError>(it != params_.end(), "unknown parameter: ", name);
    return *it->second;
  }
  const Parameter<T>& Get(const std::string& name) const {
    auto it = params_.find(name);
    Require<UsageError>(it != params_.end(), "unknown parameter: ", name);
    return *it->second;
  }
  bool Has(const std::string& name) const { return params_.count(name) > 0; }

  void SetTrainable(const std::string& name, bool trainable) {
    Get(name).trainable = trainable;
    Get(name).value.SetRequiresGrad(trainable);
  }

  template <typename Fn>
  void ForEach(Fn&& fn) {
    for (auto& [name, p] : params_) fn(*p);
  }
  template <typename Fn>
  void ForEach(Fn&& fn) const {
    for (const auto& [name, p] : params_) fn(*p);
  }

  size_t CountValues() const {
    size_t n = 0;
    ForEach([&](const Parameter<T>& p) { n += p.value.Size(); });
    return n;
  }

  void ZeroGrad() {
    ForEach([](Parameter<T>& p) { p.value.ZeroGrad(); });
  }

  uint64_t init_seed() const { return init_seed_; }

 private:
  uint64_t init_seed_;
  std::map<std::string, std::unique_ptr<Parameter<T>>> params_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One Adam update over every trainable parameter. A trainable parameter
// whose gradient was never populated is an error, not a silent skip.
template <typename T>
void AdamStep(ParamStore<T>& params, double learning_rate,
              const AdamOptions& opts = {}) {
  params.ForEach([&](Parameter<T>& p) {
    if (!p.trainable) return;
    Require<UsageError>(p.value.HasGrad(),
                        "adam step: missing gradient for parameter ", p.name);
    const std::vector<T>& g = p.value.Grad();
    std::vector<T>& w = p.value.MutableValue();
    if (p.m.empty()) {
      p.m.assign(w.size(), T(0));
      p.v.assign(w.size(), T(0));
    }
    p.steps += 1;
    T b1 = static_cast<T>(opts.beta1);
    T b2 = static_cast<T>(opts.beta2);
    T eps = static_cast<T>(opts.epsilon);
    T lr = static_cast<T>(learning_rate);
    T bc1 = T(1) - static_cast<T>(std::pow(opts.beta1, static_cast<double>(p.steps)));
    T bc2 = T(1) - static_cast<T>(std::pow(opts.beta2, static_cast<double>(p.steps)));
    for (size_t i = 0; i < w.size(); ++i) {
      p.m[i] = b1 * p.m[i] + (T(1) - b1) * g[i];
      p.v[i] = b2 * p.v[i] + (T(1) - b2) * g[i] * g[i];
      T mhat = p.m[i] / bc1;
      T vhat = p.v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  });
}

}  // namespace spkembed::num

#endif  // SPKEMBED_OPTIM_H_
