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

#include "kfc/tensor.h"

#include <cassert>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace kfc {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Buffer& internal::Node::GradBuffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::Zeros(const Shape& shape, bool requires_grad) {
  return Full(shape, 0.0, requires_grad);
}

Tensor Tensor::Full(const Shape& shape, double value, bool requires_grad) {
  return FromData(shape, std::vector<double>(NumElements(shape), value),
                  requires_grad);
}

Tensor Tensor::FromData(const Shape& shape, std::vector<double> data,
                        bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dims must be positive, got " +
                           ShapeToString(shape));
    }
  }
  if (NumElements(shape) != data.size()) {
    throw DimensionError("shape " + ShapeToString(shape) + " needs " +
                         std::to_string(NumElements(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<internal::Node>();
  node->shape = shape;
  node->data.assign(data.begin(), data.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

Tensor Tensor::Matrix(const std::vector<std::vector<double>>& rows,
                      bool requires_grad) {
  if (rows.empty() || rows[0].empty()) {
    throw DimensionError("Matrix() needs at least one row and column");
  }
  std::vector<double> flat;
  flat.reserve(rows.size() * rows[0].size());
  for (const auto& r : rows) {
    if (r.size() != rows[0].size()) {
      throw DimensionError("Matrix() rows have unequal lengths");
    }
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return FromData({rows.size(), rows[0].size()}, std::move(flat),
                  requires_grad);
}

const Shape& Tensor::shape() const {
  assert(node_);
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) {
    throw DimensionError("dim " + std::to_string(i) + " out of range for " +
                         ShapeToString(shape()));
  }
  return shape()[i];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) {
    throw DimensionError("expected a matrix, got " + ShapeToString(shape()));
  }
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) {
    throw DimensionError("expected a matrix, got " + ShapeToString(shape()));
  }
  return shape()[1];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " +
                         ShapeToString(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

bool Tensor::has_grad() const {
  return node_->grad.size() == node_->data.size();
}

std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->GradBuffer(); }

void Tensor::ZeroGrad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tensor::Backward() const {
  if (numel() != 1) {
    throw DimensionError("Backward() needs a scalar loss, got " +
                         ShapeToString(shape()));
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<internal::Node*> order;
  std::unordered_set<internal::Node*> done;
  std::unordered_set<internal::Node*> on_stack;
  std::vector<std::pair<internal::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  on_stack.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      internal::Node* parent = node->parents[next++].get();
      if (!parent->requires_grad || done.count(parent)) continue;
      assert(!on_stack.count(parent) && "autodiff graph has a cycle");
      on_stack.insert(parent);
      stack.emplace_back(parent, 0);
      continue;
    }
    on_stack.erase(node);
    done.insert(node);
    order.push_back(node);
    stack.pop_back();
  }

  for (internal::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->GradBuffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    internal::Node* n = *it;
    if (n->is_leaf()) continue;
    n->backward(*n);
  }
}

Tensor Tensor::Detach() const {
  return FromData(shape(), {node_->data.begin(), node_->data.end()}, false);
}

Tensor Tensor::Clone() const {
  return FromData(shape(), {node_->data.begin(), node_->data.end()},
                  node_->requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradModeEnabled() { return g_grad_enabled; }

}  // namespace kfc
