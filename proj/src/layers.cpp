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

#include "bsr/layers.hpp"

#include <cmath>
#include <random>
#include <string>

namespace bsr {

template <typename T>
Linear<T> init_linear(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  std::vector<T> w(in * out);
  for (auto& v : w) v = static_cast<T>(normal(rng));
  return {Tensor<T>({in, out}, std::move(w), true), Tensor<T>::zeros({out}, true)};
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Linear<T>& layer) {
  return ops::add(ops::matmul(x, layer.weight), layer.bias);
}

template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& scale, T eps) {
  if (scale.rank() != 1 || scale.numel() != x.dim(-1)) {
    throw DimensionError("RMSNorm scale " + to_string(scale.shape()) + " does not match input " +
                         to_string(x.shape()));
  }
  auto ms = ops::mean_axis(ops::square(x), -1, true);
  auto inv = ops::rsqrt(ops::add_scalar(ms, eps));
  return ops::mul(ops::mul(x, inv), scale);
}

template <typename T>
Tensor<T> init_norm_scale(std::size_t size) {
  return Tensor<T>::full({size}, T(1), true);
}

template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  const std::size_t width = x.dim(-1);
  if (width % 2 != 0) {
    throw DimensionError("GLU needs an even last dimension, got " + std::to_string(width));
  }
  auto value = ops::slice(x, -1, 0, width / 2);
  auto gate = ops::slice(x, -1, width / 2, width / 2);
  return ops::mul(value, ops::sigmoid(gate));
}

#define BSR_INSTANTIATE_LAYERS(T)                                        \
  template Linear<T> init_linear<T>(std::size_t, std::size_t, Rng&);     \
  template Tensor<T> linear(const Tensor<T>&, const Linear<T>&);         \
  template Tensor<T> rmsnorm(const Tensor<T>&, const Tensor<T>&, T);     \
  template Tensor<T> init_norm_scale<T>(std::size_t);                    \
  template Tensor<T> glu(const Tensor<T>&);

BSR_INSTANTIATE_LAYERS(float)
BSR_INSTANTIATE_LAYERS(double)
#undef BSR_INSTANTIATE_LAYERS

}  // namespace bsr
