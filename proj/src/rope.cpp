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

#include "bsr/rope.hpp"

#include <cmath>
#include <string>

#include "bsr/errors.hpp"

namespace bsr {
namespace {

double rope_angle(std::size_t position, std::size_t pair, std::size_t head_dim, double base) {
  const double freq = std::pow(base, -2.0 * static_cast<double>(pair) / static_cast<double>(head_dim));
  return static_cast<double>(position) * freq;
}

}  // namespace

RopeEncoder::RopeEncoder(std::size_t head_dim, std::size_t max_positions, double base)
    : head_dim_(head_dim), max_positions_(max_positions), base_(base) {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ConfigError("RoPE head dimension must be even, got " + std::to_string(head_dim));
  }
  if (base <= 0.0) throw ConfigError("RoPE base must be positive");
  const std::size_t pairs = head_dim / 2;
  cos_.resize(max_positions * pairs);
  sin_.resize(max_positions * pairs);
  for (std::size_t m = 0; m < max_positions; ++m) {
    for (std::size_t i = 0; i < pairs; ++i) {
      const double a = rope_angle(m, i, head_dim, base);
      cos_[m * pairs + i] = std::cos(a);
      sin_[m * pairs + i] = std::sin(a);
    }
  }
}

double RopeEncoder::cos_at(std::size_t position, std::size_t pair) const {
  if (position < max_positions_) return cos_[position * (head_dim_ / 2) + pair];
  return std::cos(rope_angle(position, pair, head_dim_, base_));
}

double RopeEncoder::sin_at(std::size_t position, std::size_t pair) const {
  if (position < max_positions_) return sin_[position * (head_dim_ / 2) + pair];
  return std::sin(rope_angle(position, pair, head_dim_, base_));
}

void RopeEncoder::corrupt_angle_for_testing(std::size_t position, double delta) {
  if (position >= max_positions_) return;
  const std::size_t pairs = head_dim_ / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double a = rope_angle(position, i, head_dim_, base_) + delta;
    cos_[position * pairs + i] = std::cos(a);
    sin_[position * pairs + i] = std::sin(a);
  }
}

}  // namespace bsr
