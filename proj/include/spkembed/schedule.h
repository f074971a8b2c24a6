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

#ifndef SPKEMBED_SCHEDULE_H_
#define SPKEMBED_SCHEDULE_H_

#include <cmath>
#include <string>

#include "spkembed/errors.h"

namespace spkembed::train {

enum class FinalDecay { kLinear, kExponential, kCosine };

inline FinalDecay ParseFinalDecay(const std::string& s) {
  if (s == "linear") return FinalDecay::kLinear;
  if (s == "exponential") return FinalDecay::kExponential;
  if (s == "cosine") return FinalDecay::kCosine;
  throw ConfigError(StrCat("schedule.decay must be linear|exponential|cosine, got ", s));
}

// One-cycle learning rate: linear warm-up to the peak over phase 1, linear
// decay back over phase 2, then a final tail that reaches lr_final exactly
// at the last step. Piecewise linear in the step index with the default
// (linear) tail; phase boundaries are shared anchor points, so the curve is
// continuous at both joints.
struct OclrSchedule {
  double lr_start = 2e-3;
  double lr_peak = 2e-2;
  double lr_end_phase2 = 2e-3;
  double lr_final = 1e-7;
  int epochs_phase1 = 16;
  int epochs_phase2 = 16;
  int epochs_phase3 = 10;
  int steps_per_epoch = 1;
  FinalDecay final_decay = FinalDecay::kLinear;

  static OclrSchedule Paper(int steps_per_epoch) {
    OclrSchedule s;
    s.steps_per_epoch = steps_per_epoch;
    return s;
  }

  int TotalEpochs() const { return epochs_phase1 + epochs_phase2 + epochs_phase3; }
  int TotalSteps() const { return TotalEpochs() * steps_per_epoch; }

  void Validate() const {
    auto positive = [](double v, const char* field) {
      Require<ConfigError>(v > 0, "schedule.", field, " must be positive, got ", v);
    };
    positive(lr_start, "lr_start");
    positive(lr_peak, "lr_peak");
    positive(lr_end_phase2, "lr_end_phase2");
    positive(lr_final, "lr_final");
    Require<ConfigError>(epochs_phase1 >= 1 && epochs_phase2 >= 1 && epochs_phase3 >= 1,
                         "schedule phase epochs must each be at least 1");
    Require<ConfigError>(steps_per_epoch >= 1,
                         "schedule.steps_per_epoch must be at least 1");
    Require<ConfigError>(epochs_phase3 * steps_per_epoch >= 2 ||
                             lr_end_phase2 == lr_final,
                         "final phase needs at least 2 steps to reach lr_final");
  }

  // Valid for 0 <= step < TotalSteps(). Anchors: lr(0) = lr_start,
  // lr(p1) = lr_peak, lr(p1+p2) = lr_end_phase2, lr(TotalSteps()-1) = lr_final.
  double LrAt(int step) const {
    Require<UsageError>(step >= 0 && step < TotalSteps(), "schedule step ", step,
                        " outside [0, ", TotalSteps(), ")");
    const int p1 = epochs_phase1 * steps_per_epoch;
    const int p2 = epochs_phase2 * steps_per_epoch;
    if (step <= p1) return Lerp(lr_start, lr_peak, Frac(step, 0, p1));
    if (step <= p1 + p2)
      return Lerp(lr_peak, lr_end_phase2, Frac(step, p1, p1 + p2));
    const double f = Frac(step, p1 + p2, TotalSteps() - 1);
    switch (final_decay) {
      case FinalDecay::kLinear:
        return Lerp(lr_end_phase2, lr_final, f);
      case FinalDecay::kExponential:
        return lr_end_phase2 * std::pow(lr_final / lr_end_phase2, f);
      case FinalDecay::kCosine:
        return lr_final +
               (lr_end_phase2 - lr_final) * 0.5 * (1.0 + std::cos(M_PI * f));
    }
    throw UsageError("unreachable decay kind");
  }

 private:
  static double Frac(int step, int lo, int hi) {
    return static_cast<double>(step - lo) / static_cast<double>(hi - lo);
  }
  // Symmetric form: exact at the endpoints and at the midpoint.
  static double Lerp(double a, double b, double f) { return a * (1.0 - f) + b * f; }
};

}  // namespace spkembed::train

#endif  // SPKEMBED_SCHEDULE_H_
