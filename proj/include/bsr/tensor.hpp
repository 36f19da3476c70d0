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

// Dense row-major tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node holding shape, data and an
// optional gradient buffer. Operations in ops.hpp record themselves on the
// thread's active Tape whenever one of their inputs requires a gradient;
// Tape::backward then walks the record in reverse and accumulates gradients
// into every reachable node.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsr/errors.hpp"

namespace bsr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (bsr::numel(shape) != data.size() || shape.empty()) {
      throw DimensionError("tensor data of length " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape));
    }
    for (auto d : shape) {
      if (d == 0) throw DimensionError("zero-sized dimension in shape " + to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = bsr::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = bsr::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  /// Size of dimension `axis`; negative values count from the back.
  std::size_t dim(int axis) const {
    const int r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                           to_string(shape()));
    }
    return node_->shape[static_cast<std::size_t>(a)];
  }

  std::span<const T> data() const { return node_->data; }
  /// In-place access for optimizers and initializers. Never call while a tape
  /// that captured this tensor is still pending backward.
  std::span<T> mutable_data() { return node_->data; }
  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the data with no gradient tracking and independent storage.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of primitive operations executed while the tape is active.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode<T>>;
  using BackwardFn = std::function<void(std::span<const T> output_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() {
    if (active_ == this) active_ = nullptr;
  }

  /// RAII activation: ops executed while a Recording is alive land on this tape.
  class Recording {
   public:
    explicit Recording(Tape* tape) : previous_(active_) { active_ = tape; }
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;
    ~Recording() { active_ = previous_; }

   private:
    Tape* previous_;
  };

  [[nodiscard]] Recording record() { return Recording(this); }

  static Tape* active() { return active_; }

  void push(std::vector<NodePtr> inputs, NodePtr output, BackwardFn backward) {
    output->requires_grad = true;
    entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  /// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls
  /// until zero_grad(); intermediate gradients are released after use.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw DimensionError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    auto& seed = loss.node()->grad_buffer();
    seed[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      auto& out = *it->output;
      if (out.grad.empty()) continue;
      it->backward(out.grad);
      if (it->output != loss.node()) {
        out.grad.clear();
        out.grad.shrink_to_fit();
      }
    }
  }

 private:
  struct Entry {
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  static inline thread_local Tape* active_ = nullptr;
};

/// Active tape if any of the inputs needs a gradient, otherwise nullptr.
template <typename T, typename... Ts>
Tape<T>* grad_tape(const Tensor<T>& first, const Ts&... rest) {
  auto* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  const bool any = first.requires_grad() || (rest.requires_grad() || ...);
  return any ? tape : nullptr;
}

}  // namespace bsr
