// Copyright 2026 The bsroformer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bsr/tensor.hpp"

namespace bsr {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-6;
  /// Entries compared; 0 means every entry of every parameter. Otherwise
  /// entries are drawn uniformly over all parameters with `seed`.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  std::string worst;  // "<param>[index]: analytic vs numeric"
};

/// Compares tape gradients of the scalar `f` with respect to `params` against
/// central finite differences. `f` must be deterministic and read the current
/// contents of `params` on every call.
GradCheckReport grad_check(const std::function<Tensor<double>()>& f,
                           const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace bsr
