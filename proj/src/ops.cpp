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

#include "bsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "bsr/rope.hpp"

namespace bsr {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) +
                           " cannot be broadcast together");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace ops {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

std::size_t resolve_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

template <typename T>
Tensor<T> make_output(const char* op, Shape shape, std::vector<T> data) {
  for (const T v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(op) + " produced a non-finite value");
    }
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void add_into(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Strides of `in` aligned to `out`, zero on broadcast dimensions.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) over the broadcast iteration space.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t inner = out.back();
  const std::size_t ia = sa.back();
  const std::size_t ib = sb.back();
  const std::size_t outer = numel(out) / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * inner;
    for (std::size_t j = 0; j < inner; ++j) f(base + j, oa + j * ia, ob + j * ib);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { add, sub, mul, div };

const char* binary_name(BinaryKind k) {
  switch (k) {
    case BinaryKind::add: return "add";
    case BinaryKind::sub: return "sub";
    case BinaryKind::mul: return "mul";
    case BinaryKind::div: return "div";
  }
  return "binary";
}

template <typename T>
T apply_binary(BinaryKind k, T x, T y) {
  switch (k) {
    case BinaryKind::add: return x + y;
    case BinaryKind::sub: return x - y;
    case BinaryKind::mul: return x * y;
    case BinaryKind::div: return x / y;
  }
  return T(0);
}

template <typename T>
Tensor<T> binary(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  const bool same = a.shape() == b.shape();
  std::vector<T> out(numel(out_shape));
  const auto ad = a.data();
  const auto bd = b.data();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_binary(kind, ad[i], bd[i]);
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      out[o] = apply_binary(kind, ad[i], bd[j]);
    });
  }
  auto result = make_output(binary_name(kind), out_shape, std::move(out));
  if (auto* tape = grad_tape(a, b)) {
    tape->push({a.node(), b.node()}, result.node(),
               [kind, an = a.node(), bn = b.node(), out_shape, sa, sb](std::span<const T> g) {
                 const bool ga_on = an->requires_grad;
                 const bool gb_on = bn->requires_grad;
                 std::vector<T>* ga = ga_on ? &an->grad_buffer() : nullptr;
                 std::vector<T>* gb = gb_on ? &bn->grad_buffer() : nullptr;
                 const auto& av = an->data;
                 const auto& bv = bn->data;
                 for_each_broadcast(out_shape, sa, sb,
                                    [&](std::size_t o, std::size_t i, std::size_t j) {
                                      const T go = g[o];
                                      switch (kind) {
                                        case BinaryKind::add:
                                          if (ga) (*ga)[i] += go;
                                          if (gb) (*gb)[j] += go;
                                          break;
                                        case BinaryKind::sub:
                                          if (ga) (*ga)[i] += go;
                                          if (gb) (*gb)[j] -= go;
                                          break;
                                        case BinaryKind::mul:
                                          if (ga) (*ga)[i] += go * bv[j];
                                          if (gb) (*gb)[j] += go * av[i];
                                          break;
                                        case BinaryKind::div:
                                          if (ga) (*ga)[i] += go / bv[j];
                                          if (gb) (*gb)[j] -= go * av[i] / (bv[j] * bv[j]);
                                          break;
                                      }
                                    });
               });
  }
  return result;
}

// Pointwise map with derivative expressed through input and output values.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* name, const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  auto result = make_output(name, x.shape(), std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(),
               [xn = x.node(), yn = std::weak_ptr<TensorNode<T>>(result.node()),
                deriv](std::span<const T> g) {
                 auto y = yn.lock();
                 auto& gx = xn->grad_buffer();
                 for (std::size_t i = 0; i < gx.size(); ++i) {
                   gx[i] += g[i] * deriv(xn->data[i], y->data[i]);
                 }
               });
  }
  return result;
}

// C[M,P] += A[M,K] * B[K,P], accumulation in k order.
template <typename T>
void gemm_acc(std::size_t m, std::size_t k, std::size_t p, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  }
  return out;
}

// Split a shape around `axis` into outer * extent * inner.
struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::add, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::sub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::mul, a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(BinaryKind::div, a, b);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary("add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return unary("mul_scalar", x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> rsqrt(const Tensor<T>& x) {
  for (const T v : x.data()) {
    if (!(v > T(0))) throw NumericalError("rsqrt of a non-positive value");
  }
  return unary("rsqrt", x, [](T v) { return T(1) / std::sqrt(v); },
               [](T, T y) { return T(-0.5) * y * y * y; });
}

// Pairwise summation keeps the rounding error of long reductions (loss terms
// over whole spectrograms) near log2(n) ulp instead of sqrt(n).
template <typename T>
T pairwise_sum(std::span<const T> v) {
  if (v.size() <= 128) {
    T s = T(0);
    for (const T x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const T s = pairwise_sum(x.data());
  auto result = make_output("sum", {1}, std::vector<T>{s});
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node()](std::span<const T> g) {
      auto& gx = xn->grad_buffer();
      for (auto& v : gx) v += g[0];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, int axis, bool keepdim) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim || x.rank() == 1) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const T* src = xd.data() + (o * s.extent + e) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  auto result = make_output("sum_axis", out_shape, std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node(), s](std::span<const T> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t e = 0; e < s.extent; ++e) {
          T* dst = gx.data() + (o * s.extent + e) * s.inner;
          const T* src = g.data() + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis, bool keepdim) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  const T extent = static_cast<T>(x.shape()[ax]);
  // Division (not multiplication by a reciprocal) keeps this bit-compatible
  // with straightforward per-row loops.
  auto summed = sum_axis(x, axis, keepdim);
  return unary("mean_axis", summed, [extent](T v) { return v / extent; },
               [extent](T, T) { return T(1) / extent; });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = xd[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, xd[base + e * s.inner]);
      T total = T(0);
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(xd[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  auto result = make_output("softmax", x.shape(), std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(),
               [xn = x.node(), yn = std::weak_ptr<TensorNode<T>>(result.node()),
                s](std::span<const T> g) {
                 auto y = yn.lock();
                 auto& gx = xn->grad_buffer();
                 for (std::size_t o = 0; o < s.outer; ++o) {
                   for (std::size_t i = 0; i < s.inner; ++i) {
                     const std::size_t base = o * s.extent * s.inner + i;
                     T dot = T(0);
                     for (std::size_t e = 0; e < s.extent; ++e) {
                       dot += g[base + e * s.inner] * y->data[base + e * s.inner];
                     }
                     for (std::size_t e = 0; e < s.extent; ++e) {
                       const std::size_t k = base + e * s.inner;
                       gx[k] += y->data[k] * (g[k] - dot);
                     }
                   }
                 }
               });
  }
  return result;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t p = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul inner dimensions differ: " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const auto ad = a.data();
  const auto bd = b.data();

  if (b.rank() == 2) {
    // Weight matrix shared by every leading index: one big product.
    const std::size_t rows = a.numel() / k;
    Shape out_shape = a.shape();
    out_shape.back() = p;
    std::vector<T> out(rows * p, T(0));
    gemm_acc(rows, k, p, ad.data(), bd.data(), out.data());
    auto result = make_output("matmul", out_shape, std::move(out));
    if (auto* tape = grad_tape(a, b)) {
      tape->push({a.node(), b.node()}, result.node(),
                 [an = a.node(), bn = b.node(), rows, k, p](std::span<const T> g) {
                   if (an->requires_grad) {
                     const auto bt = transposed(bn->data.data(), k, p);
                     gemm_acc(rows, p, k, g.data(), bt.data(), an->grad_buffer().data());
                   }
                   if (bn->requires_grad) {
                     const auto at = transposed(an->data.data(), rows, k);
                     gemm_acc(k, rows, p, at.data(), g.data(), bn->grad_buffer().data());
                   }
                 });
    }
    return result;
  }

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = batch_a.empty() ? batch_b : broadcast_shapes(batch_a, batch_b);
  } catch (const DimensionError&) {
    throw DimensionError("matmul batch dimensions differ: " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t nbatch = numel(batch);
  // Matrix offsets (in matrices) of a and b for each output batch index.
  std::vector<std::size_t> offa(nbatch), offb(nbatch);
  {
    const Shape ba = batch_a.empty() ? Shape{1} : batch_a;
    const auto sa = broadcast_strides(ba, batch);
    const auto sb = broadcast_strides(batch_b, batch);
    for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      offa[o] = i;
      offb[o] = j;
    });
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  std::vector<T> out(nbatch * m * p, T(0));
  for (std::size_t i = 0; i < nbatch; ++i) {
    gemm_acc(m, k, p, ad.data() + offa[i] * m * k, bd.data() + offb[i] * k * p, out.data() + i * m * p);
  }
  auto result = make_output("matmul", out_shape, std::move(out));
  if (auto* tape = grad_tape(a, b)) {
    tape->push({a.node(), b.node()}, result.node(),
               [an = a.node(), bn = b.node(), offa, offb, m, k, p](std::span<const T> g) {
                 for (std::size_t i = 0; i < offa.size(); ++i) {
                   const T* gi = g.data() + i * m * p;
                   const T* ai = an->data.data() + offa[i] * m * k;
                   const T* bi = bn->data.data() + offb[i] * k * p;
                   if (an->requires_grad) {
                     const auto bt = transposed(bi, k, p);
                     gemm_acc(m, p, k, gi, bt.data(), an->grad_buffer().data() + offa[i] * m * k);
                   }
                   if (bn->requires_grad) {
                     const auto at = transposed(ai, m, k);
                     gemm_acc(k, m, p, at.data(), gi, bn->grad_buffer().data() + offb[i] * k * p);
                   }
                 }
               });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const std::size_t rank = x.rank();
  std::vector<bool> seen(rank, false);
  if (order.size() != rank) {
    throw DimensionError("permutation of length " + std::to_string(order.size()) +
                         " for shape " + to_string(x.shape()));
  }
  for (auto o : order) {
    if (o >= rank || seen[o]) throw DimensionError("invalid axis permutation");
    seen[o] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
  Shape out_shape(rank);
  std::vector<std::size_t> gather(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[order[i]];
    gather[i] = in_strides[order[i]];
  }
  // Source index for every output element.
  std::vector<std::size_t> src(x.numel());
  const std::vector<std::size_t> zero(rank, 0);
  for_each_broadcast(out_shape, gather, zero,
                     [&](std::size_t o, std::size_t i, std::size_t) { src[o] = i; });
  const auto xd = x.data();
  std::vector<T> out(src.size());
  for (std::size_t o = 0; o < src.size(); ++o) out[o] = xd[src[o]];
  Tensor<T> result(out_shape, std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node(), src = std::move(src)](std::span<const T> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < src.size(); ++o) gx[src[o]] += g[o];
    });
  }
  return result;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor<T> result(shape, std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node()](std::span<const T> g) {
      add_into(xn->grad_buffer(), g);
    });
  }
  return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = resolve_axis(axis, x.rank());
  if (length == 0 || start + length > x.shape()[ax]) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(ax) + " of " +
                         to_string(x.shape()));
  }
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<T> out(s.outer * length * s.inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const T* src = xd.data() + (o * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, out.data() + o * length * s.inner);
  }
  Tensor<T> result(out_shape, std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node(), s, start, length](std::span<const T> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        T* dst = gx.data() + (o * s.extent + start) * s.inner;
        const T* src = g.data() + o * length * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of no tensors");
  const std::size_t ax = resolve_axis(axis, parts.front().rank());
  Shape out_shape = parts.front().shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size()) throw DimensionError("concat of tensors with different ranks");
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      if (d != ax && p.shape()[d] != out_shape[d]) {
        throw DimensionError("concat shape mismatch: " + to_string(p.shape()) + " vs " +
                             to_string(parts.front().shape()));
      }
    }
    out_shape[ax] += p.shape()[ax];
  }
  const auto s = split_at(out_shape, ax);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> starts;
  std::size_t start = 0;
  for (const auto& p : parts) {
    starts.push_back(start);
    const std::size_t len = p.shape()[ax];
    const auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy(pd.data() + o * len * s.inner, pd.data() + (o + 1) * len * s.inner,
                out.data() + (o * s.extent + start) * s.inner);
    }
    start += len;
  }
  Tensor<T> result(out_shape, std::move(out));
  auto* tape = Tape<T>::active();
  const bool any = std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.requires_grad(); });
  if (tape != nullptr && any) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->push(nodes, result.node(), [nodes, starts, s, ax](std::span<const T> g) {
      for (std::size_t n = 0; n < nodes.size(); ++n) {
        if (!nodes[n]->requires_grad) continue;
        const std::size_t len = nodes[n]->shape[ax];
        auto& gp = nodes[n]->grad_buffer();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const T* src = g.data() + (o * s.extent + starts[n]) * s.inner;
          T* dst = gp.data() + o * len * s.inner;
          for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  if (rng == nullptr) throw ConfigError("training-mode dropout needs a generator");
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = u(*rng) < rate ? T(0) : keep_scale;
  const auto xd = x.data();
  std::vector<T> out(mask.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node(), mask = std::move(mask)](std::span<const T> g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> rope_rotate(const Tensor<T>& x, const RopeEncoder& encoder, int seq_axis,
                      std::span<const std::size_t> positions) {
  if (x.rank() < 2) throw DimensionError("rope_rotate needs rank >= 2");
  const std::size_t ax = resolve_axis(seq_axis, x.rank());
  if (ax == x.rank() - 1) throw DimensionError("rope sequence axis cannot be the feature axis");
  const std::size_t d = x.dim(-1);
  if (d % 2 != 0) throw ConfigError("rope_rotate needs an even head dimension, got " + std::to_string(d));
  if (d != encoder.head_dim()) {
    throw DimensionError("rope encoder head_dim " + std::to_string(encoder.head_dim()) +
                         " does not match tensor feature size " + std::to_string(d));
  }
  const std::size_t seq = x.shape()[ax];
  if (positions.size() != seq) throw DimensionError("rope positions do not match sequence length");
  std::size_t outer = 1, mid = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.shape()[i];
  for (std::size_t i = ax + 1; i + 1 < x.rank(); ++i) mid *= x.shape()[i];
  const std::size_t pairs = d / 2;
  // Per (position, pair) cos/sin in the tensor's precision.
  std::vector<T> cs(seq * pairs), sn(seq * pairs);
  for (std::size_t s = 0; s < seq; ++s) {
    for (std::size_t i = 0; i < pairs; ++i) {
      cs[s * pairs + i] = static_cast<T>(encoder.cos_at(positions[s], i));
      sn[s * pairs + i] = static_cast<T>(encoder.sin_at(positions[s], i));
    }
  }
  auto rotate = [outer, seq, mid, d, pairs](const T* in, T* out, const std::vector<T>& c,
                                            const std::vector<T>& sgn_sin, T sign) {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t s = 0; s < seq; ++s) {
        for (std::size_t m = 0; m < mid; ++m) {
          const std::size_t base = ((o * seq + s) * mid + m) * d;
          for (std::size_t i = 0; i < pairs; ++i) {
            const T cv = c[s * pairs + i];
            const T sv = sign * sgn_sin[s * pairs + i];
            const T x0 = in[base + 2 * i];
            const T x1 = in[base + 2 * i + 1];
            out[base + 2 * i] += x0 * cv - x1 * sv;
            out[base + 2 * i + 1] += x0 * sv + x1 * cv;
          }
        }
      }
    }
  };
  std::vector<T> out(x.numel(), T(0));
  rotate(x.data().data(), out.data(), cs, sn, T(1));
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(),
               [xn = x.node(), rotate, cs = std::move(cs), sn = std::move(sn)](std::span<const T> g) {
                 // Transpose of a rotation is the rotation by the negated angle.
                 rotate(g.data(), xn->grad_buffer().data(), cs, sn, T(-1));
               });
  }
  return result;
}

template <typename T>
Tensor<T> complex_mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("complex_mul shape mismatch: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  if (a.dim(-1) != 2) throw DimensionError("complex tensors need a trailing (re, im) axis of size 2");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < out.size(); i += 2) {
    out[i] = ad[i] * bd[i] - ad[i + 1] * bd[i + 1];
    out[i + 1] = ad[i] * bd[i + 1] + ad[i + 1] * bd[i];
  }
  auto result = make_output("complex_mul", a.shape(), std::move(out));
  if (auto* tape = grad_tape(a, b)) {
    tape->push({a.node(), b.node()}, result.node(), [an = a.node(), bn = b.node()](std::span<const T> g) {
      // dL/da = g * conj(b), dL/db = g * conj(a) for the real pair layout.
      const auto& av = an->data;
      const auto& bv = bn->data;
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); i += 2) {
          ga[i] += g[i] * bv[i] + g[i + 1] * bv[i + 1];
          ga[i + 1] += -g[i] * bv[i + 1] + g[i + 1] * bv[i];
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < gb.size(); i += 2) {
          gb[i] += g[i] * av[i] + g[i + 1] * av[i + 1];
          gb[i + 1] += -g[i] * av[i + 1] + g[i + 1] * av[i];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> stft(const Tensor<T>& x, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t length = x.dim(-1);
  const std::size_t rows = x.numel() / length;
  const std::size_t frames = cfg.frames(length);
  const std::size_t bins = cfg.bins();
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.insert(out_shape.end(), {frames, bins, 2});
  std::vector<T> out(rows * frames * bins * 2);
  stft_kernel::forward<T>(x.data(), rows, length, cfg, out);
  auto result = make_output("stft", out_shape, std::move(out));
  if (auto* tape = grad_tape(x)) {
    tape->push({x.node()}, result.node(), [xn = x.node(), rows, length, cfg](std::span<const T> g) {
      stft_kernel::forward_adjoint<T>(g, rows, length, cfg, xn->grad_buffer());
    });
  }
  return result;
}

template <typename T>
Tensor<T> istft(const Tensor<T>& spec, const StftConfig& cfg, std::size_t length) {
  cfg.validate();
  if (spec.rank() < 3 || spec.dim(-1) != 2 || spec.dim(-2) != cfg.bins()) {
    throw DimensionError("istft expects [..., frames, " + std::to_string(cfg.bins()) +
                         ", 2], got " + to_string(spec.shape()));
  }
  const std::size_t frames = spec.dim(-3);
  const std::size_t rows = spec.numel() / (frames * cfg.bins() * 2);
  Shape out_shape(spec.shape().begin(), spec.shape().end() - 3);
  out_shape.push_back(length);
  std::vector<T> out(rows * length);
  stft_kernel::inverse<T>(spec.data(), rows, frames, cfg, length, out);
  auto result = make_output("istft", out_shape, std::move(out));
  if (auto* tape = grad_tape(spec)) {
    tape->push({spec.node()}, result.node(),
               [sn = spec.node(), rows, frames, cfg, length](std::span<const T> g) {
                 stft_kernel::inverse_adjoint<T>(g, rows, frames, cfg, length, sn->grad_buffer());
               });
  }
  return result;
}

#define BSR_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                          \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> tanh(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> abs(const Tensor<T>&);                                                    \
  template Tensor<T> square(const Tensor<T>&);                                                 \
  template Tensor<T> rsqrt(const Tensor<T>&);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> sum_axis(const Tensor<T>&, int, bool);                                    \
  template Tensor<T> mean_axis(const Tensor<T>&, int, bool);                                   \
  template Tensor<T> softmax(const Tensor<T>&, int);                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);               \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                  \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                   \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                               \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng*);                            \
  template Tensor<T> rope_rotate(const Tensor<T>&, const RopeEncoder&, int,                    \
                                 std::span<const std::size_t>);                                \
  template Tensor<T> complex_mul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> stft(const Tensor<T>&, const StftConfig&);                                \
  template Tensor<T> istft(const Tensor<T>&, const StftConfig&, std::size_t);

BSR_INSTANTIATE_OPS(float)
BSR_INSTANTIATE_OPS(double)
#undef BSR_INSTANTIATE_OPS

}  // namespace ops
}  // namespace bsr
