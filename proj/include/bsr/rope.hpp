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
#include <vector>

namespace bsr {

/// Rotary position encoder: pair i of a head vector at position m is rotated
/// by m * base^(-2i/head_dim). Angles are tabulated up to max_positions and
/// computed directly beyond.
class RopeEncoder {
 public:
  RopeEncoder(std::size_t head_dim, std::size_t max_positions, double base = 10000.0);

  std::size_t head_dim() const { return head_dim_; }
  std::size_t max_positions() const { return max_positions_; }
  double base() const { return base_; }

  double cos_at(std::size_t position, std::size_t pair) const;
  double sin_at(std::size_t position, std::size_t pair) const;

  /// Test hook: perturbs the tabulated angle of one position so that negative
  /// controls can confirm the relative-position checks notice.
  void corrupt_angle_for_testing(std::size_t position, double delta);

 private:
  std::size_t head_dim_;
  std::size_t max_positions_;
  double base_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

}  // namespace bsr
