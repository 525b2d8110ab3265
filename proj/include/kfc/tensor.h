// Copyright 2026 The kfconformer Authors
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

#ifndef KFC_TENSOR_H_
#define KFC_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kfc {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an op produces NaN/Inf or receives an input outside its domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Allocator that places every buffer on a 64-byte boundary. Vectorized
// kernels peel leading elements until they reach an aligned address, so a
// fixed base alignment makes results independent of where the heap put the
// data.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, kAlignment);
  }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace internal {

struct Node;
using BackwardFn = std::function<void(const Node& out)>;

struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
  Buffer& GradBuffer();
};

}  // namespace internal

// Dense row-major tensor of doubles with an optional gradient slot.
//
// Copies share the underlying storage and graph node, the same way framework
// tensors do; use Clone() for an independent copy. Every op records a
// backward closure when grad mode is on and some input requires a gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(const Shape& shape, bool requires_grad = false);
  static Tensor Full(const Shape& shape, double value,
                     bool requires_grad = false);
  static Tensor FromData(const Shape& shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);
  // 2-D convenience: Matrix({{1, 2}, {3, 4}}).
  static Tensor Matrix(const std::vector<std::vector<double>>& rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;
  // Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void ZeroGrad();

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed each time.
  void Backward() const;

  // Same values, no graph history, requires_grad=false.
  Tensor Detach() const;
  // Independent deep copy of values (no graph), preserving requires_grad.
  Tensor Clone() const;

  // For op implementations.
  const std::shared_ptr<internal::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

// Thread-local switch that disables graph recording while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradModeEnabled();

}  // namespace kfc

#endif  // KFC_TENSOR_H_
