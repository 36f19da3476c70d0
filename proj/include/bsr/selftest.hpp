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

// Built-in self checks run by `bsroformer selftest`: finite-difference
// gradient checks of every differentiable module and a set of structural
// invariants of the pipeline.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bsr {

enum class SelftestSuite { grad, invariants, all };

SelftestSuite parse_selftest_suite(const std::string& text);

struct SelftestOptions {
  /// Negative control: perturb one tabulated RoPE angle before the
  /// relative-position check. Position 0 leaves the table intact.
  std::size_t corrupt_rope_position = 0;
  double corrupt_rope_delta = 0.25;
};

struct SelftestResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<SelftestResult> run_selftest(SelftestSuite suite, const SelftestOptions& options = {});

}  // namespace bsr
